"""Command line entry point ``pvem-bench``."""

import argparse
import sys

from .bench import EXPERIMENTS, MESH_FAMILIES, ExperimentConfig, load_config, run_experiment
from .kernels import BACKEND


def _int_list(text):
    return tuple(int(t) for t in text.replace(",", " ").split())


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pvem-bench",
        description="p-version VEM experiments: condition numbers, multigrid and PCG studies.",
    )
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name)
        sp.add_argument("--mesh", nargs="+", choices=MESH_FAMILIES, dest="meshes",
                        help="mesh families (default depends on the experiment)")
        sp.add_argument("--n", type=int, help="cells per side (square, hex) or seeds (voronoi)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--lloyd-iters", type=int, dest="lloyd_iters")
        sp.add_argument("--p-min", type=int, dest="p_min")
        sp.add_argument("--p-max", type=int, dest="p_max")
        sp.add_argument("--levels", type=_int_list, help="number(s) of levels K, e.g. 2,3,4")
        sp.add_argument("--smoother", choices=("richardson", "gs"))
        sp.add_argument("--m", type=_int_list, help="post-smoothing steps, e.g. 2,4,6,8")
        sp.add_argument("--m-max", type=int, dest="m_max")
        sp.add_argument("--tol", type=float)
        sp.add_argument("--maxit", type=int)
        sp.add_argument("--mode", choices=("orthonormal", "monomial"))
        sp.add_argument("--cycle", choices=("W", "V"))
        sp.add_argument("--flexible", action="store_true", default=None,
                        help="Polak-Ribiere beta in PCG")
        sp.add_argument("--lambda-safety", type=float, dest="lambda_safety")
        sp.add_argument("--workers", type=int)
        sp.add_argument("--out", help="CSV output path (default: stdout)")
        sp.add_argument("--config", help="key=value file; command line flags take precedence")
    return parser


def main(argv=None):
    args = vars(build_parser().parse_args(argv))
    config_path = args.pop("config")
    overrides = {k: v for k, v in args.items() if v is not None}
    try:
        if config_path:
            cfg = load_config(config_path, **overrides)
        else:
            cfg = ExperimentConfig(**overrides)
        result = run_experiment(cfg)
    except (ValueError, OSError) as exc:
        print(f"pvem-bench: error: {exc}", file=sys.stderr)
        return 2
    text = result.to_csv()
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for key in sorted(result.fits):
        print(f"fit {key}: {result.fits[key].describe()}", file=sys.stderr)
    for err in result.errors:
        print(f"cell failed: {err}", file=sys.stderr)
    print(f"[{result.experiment}] {len(result.rows)} rows, kernels={BACKEND}", file=sys.stderr)
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
