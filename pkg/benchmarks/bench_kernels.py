"""Time the compiled kernels against the pure-Python fallback.

Usage: python3 benchmarks/bench_kernels.py [--n 8] [--p 4] [--repeat 5]
"""

import argparse
import time

import numpy as np

from pvem import kernels
from pvem.geometry import generate_square_mesh
from pvem.vem import assemble_global


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--n", type=int, default=8, help="squares per side")
    parser.add_argument("--p", type=int, default=4, help="VEM degree")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)

    K = assemble_global(generate_square_mesh(args.n), args.p).K
    arrays = kernels.csr_arrays(K)
    g = np.random.default_rng(0).standard_normal(K.shape[0])
    backends = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])
    print(f"matrix: n={K.shape[0]} nnz={K.nnz}; backends: {', '.join(backends)}")

    results = {}
    for b in backends:
        factor = kernels.ic0_factor(arrays, 0.0, b)

        def sweeps():
            z = np.zeros_like(g)
            for _ in range(4):
                kernels.gs_forward(arrays, g, z, b)
                kernels.gs_backward(arrays, g, z, b)

        def solves():
            y = g.copy()
            kernels.lower_solve(factor, y, b)
            kernels.lower_transpose_solve(factor, y, b)

        results[b] = {
            "gs sweeps (8)": best_of(sweeps, args.repeat),
            "ic0 factor": best_of(lambda: kernels.ic0_factor(arrays, 0.0, b), args.repeat),
            "ic0 apply": best_of(solves, args.repeat),
        }

    print(f"{'kernel':<16}" + "".join(f"{b:>12}" for b in backends)
          + ("     speedup" if len(backends) == 2 else ""))
    for name in results["python"]:
        row = f"{name:<16}" + "".join(f"{results[b][name] * 1e3:>10.2f}ms" for b in backends)
        if len(backends) == 2:
            row += f"{results['python'][name] / results['cython'][name]:>11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
