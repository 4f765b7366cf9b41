"""Acceptance criteria 1-10, each at its stated tolerance and time budget.

Every test appends one "criterion N: PASS|FAIL ..." line that the terminal
summary prints. Criteria that a faithful implementation does not meet are
marked strict xfail: they run in full, print FAIL, and turn red if they ever
start passing.
"""

import time

import numpy as np
import pytest
import scipy.sparse.linalg as spla

from conftest import ACCEPTANCE_LINES
from pvem.bench import ExperimentConfig, make_mesh, patch_error, run_experiment
from pvem.multigrid import build_hierarchy, error_operator, mg_cycle
from pvem.quadrature import polygon_quadrature
from pvem.transfer import build_prolongation
from pvem.vem import build_dof_map, interpolate, prepare_elements

FAMILIES = ("square", "voronoi", "hex")
DEFAULT_N = {"square": 8, "voronoi": 64, "hex": 7}
# desk-scale meshes on which the solver tables' h-dependence is closest to
# the reference tables (see README, "Mesh sizes")
SOLVER_N = {"square": 4, "voronoi": 36, "hex": 7}

_cache = {}


def record(n, ok, detail):
    ACCEPTANCE_LINES.append(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")


def default_mesh(family):
    return make_mesh(family, DEFAULT_N[family])


def test_criterion_01_patch_test():
    t0 = time.perf_counter()
    worst = 0.0
    for family in FAMILIES:
        mesh = default_mesh(family)
        el = prepare_elements(mesh, 5)
        for p in range(1, 6):
            worst = max(worst, patch_error(mesh, p, elements=el, seed=p))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-8 and elapsed < 30
    record(1, ok, f"max relative error {worst:.2e} (<= 1e-8), {elapsed:.1f}s")
    assert worst <= 1e-8
    assert elapsed < 30


def test_criterion_02_orthonormality():
    worst = 0.0
    for family in FAMILIES:
        mesh = default_mesh(family)
        for ed in prepare_elements(mesh, 8):
            g = ed.geometry
            q = polygon_quadrature(g.vertices, 18, g.centroid)
            B = ed.basis.eval(q.points)
            gram = B.T @ (q.weights[:, None] * B)
            worst = max(worst, np.abs(gram - np.eye(len(gram))).max())
    record(2, worst <= 1e-10, f"max |Gram - I| {worst:.2e} over all elements, p <= 8")
    assert worst <= 1e-10


def _table1():
    if "table1" not in _cache:
        t0 = time.perf_counter()
        res = run_experiment(ExperimentConfig("table1", meshes=("voronoi",), n=64, p_min=1, p_max=8))
        _cache["table1"] = (res, time.perf_counter() - t0)
    return _cache["table1"]


def test_criterion_03_monomial_rate():
    res, elapsed = _table1()
    fit = res.fits["voronoi monomial"]
    assert 3.5 <= fit.exponent <= 5.5
    assert elapsed < 300


@pytest.mark.xfail(strict=True, reason="orthonormal-dof condition number grows like p^1.8 on this "
                   "mesh, below the 4 +- 1 window (README, Known deviations)")
def test_criterion_03_orthonormal_rate():
    res, elapsed = _table1()
    orth = res.fits["voronoi orthonormal"]
    mono = res.fits["voronoi monomial"]
    ok = 3 <= orth.exponent <= 5 and orth.r2 >= 0.95 and 3.5 <= mono.exponent <= 5.5
    record(3, ok, f"orthonormal s={orth.exponent:.2f} R2={orth.r2:.3f} (need 4+-1, R2>=0.95); "
                  f"monomial b={mono.exponent:.2f} (need [3.5,5.5]), {elapsed:.0f}s")
    assert 3 <= orth.exponent <= 5
    assert orth.r2 >= 0.95


def test_criterion_04_transfer_identities():
    worst = 0.0
    exact_adjoint = zero_rows = True
    for family in FAMILIES:
        mesh = default_mesh(family)
        el = prepare_elements(mesh, 8)
        for p in range(2, 9):
            dc, df = build_dof_map(mesh, p - 1), build_dof_map(mesh, p)
            tp = build_prolongation(dc, df, mesh)
            exact_adjoint &= (tp.R != tp.P.T).nnz == 0
            top = np.concatenate([df.moment_dofs(k)[(p - 2) * (p - 1) // 2:]
                                  for k in range(mesh.n_elements)])
            zero_rows &= tp.P[top].nnz == 0
            coeffs = np.random.default_rng(p).standard_normal((p, p))
            u = lambda x, y: sum(coeffs[a, b] * x**a * y**b
                                 for a in range(p) for b in range(p - a))
            got = tp.P @ interpolate(mesh, dc, u, elements=el)
            ref = interpolate(mesh, df, u, elements=el)
            nb = df.n_vertex + df.n_edge_internal
            worst = max(worst, np.abs(got[:nb] - ref[:nb]).max() / np.abs(ref[:nb]).max())
    ok = exact_adjoint and zero_rows and worst <= 1e-11
    record(4, ok, f"R == P^T exactly: {exact_adjoint}; order p-2 rows zero: {zero_rows}; "
                  f"boundary reproduction {worst:.1e} (<= 1e-11)")
    assert exact_adjoint and zero_rows
    assert worst <= 1e-11


def _sweep(family, smoother):
    key = ("rho", family, smoother)
    if key not in _cache:
        cfg = ExperimentConfig("rho", meshes=(family,), n=SOLVER_N[family], smoother=smoother)
        _cache[key] = run_experiment(cfg)
    return _cache[key]


def _monotone_violations(res):
    bad = []
    for p, k in {(r["p"], r["K"]) for r in res.rows}:
        cells = sorted((r["m"], r) for r in res.rows if r["p"] == p and r["K"] == k)
        rho = [r["rho"] for _, r in cells if r["converged"] == "yes"]
        if any(b >= a for a, b in zip(rho, rho[1:])):
            bad.append((p, k))
    return bad


def test_criterion_05_wcycle_convergence():
    t0 = time.perf_counter()
    res = _sweep("square", "richardson")
    cell = {r["m"]: r for r in res.rows if r["p"] == 3 and r["K"] == 2}
    rho8, rho6, c2 = cell[8]["rho"], cell[6]["rho"], cell[2]
    m2_ok = c2["converged"] == "x" or c2["rho"] > 0.99
    bad = _monotone_violations(res)
    elapsed = time.perf_counter() - t0
    ok = cell[8]["converged"] == "yes" and rho8 <= 0.85 and rho8 < rho6 and m2_ok and not bad
    record(5, ok, f"squares n=4 p=3 K=2: rho(8)={rho8:.3f} rho(6)={rho6:.3f} "
                  f"m=2 {c2['status']}; monotonicity violations {bad}, {elapsed:.1f}s")
    assert cell[8]["converged"] == "yes" and rho8 <= 0.85 and rho8 < rho6
    assert m2_ok
    assert not bad
    assert elapsed < 120


def test_criterion_06_gauss_seidel_superiority():
    t0 = time.perf_counter()
    wins = total = 0
    for family in FAMILIES:
        rich = {(r["p"], r["K"], r["m"]): r for r in _sweep(family, "richardson").rows}
        for r in _sweep(family, "gs").rows:
            other = rich[r["p"], r["K"], r["m"]]
            if r["converged"] == "yes" and other["converged"] == "yes":
                total += 1
                wins += r["rho"] < other["rho"]
    elapsed = time.perf_counter() - t0
    frac = wins / total
    record(6, frac >= 0.9 and elapsed < 300,
           f"rho_GS < rho_Richardson in {wins}/{total} = {frac:.0%} of matched converged cells, "
           f"{elapsed:.1f}s")
    assert total > 0 and frac >= 0.9
    assert elapsed < 300


def test_criterion_07_error_operator():
    mesh = make_mesh("square", 3)
    rng = np.random.default_rng(7)
    worst = 0.0
    nfree = 0
    for p, m in ((2, 2), (3, 4)):
        h = build_hierarchy(mesh, p)
        nfree = max(nfree, h.finest.n)
        K = h.finest.K
        f = rng.standard_normal(h.finest.n)
        zs = spla.spsolve(K.tocsc(), f)
        for smoother in ("richardson", "gs"):
            E = error_operator(h, m, smoother)
            z0 = rng.standard_normal(h.finest.n)
            z = mg_cycle(h.n_levels - 1, f, z0, m, h, smoother)
            worst = max(worst, np.abs((zs - z) - E @ (zs - z0)).max())
    ok = worst <= 1e-9 and nfree <= 200
    record(7, ok, f"max |(z*-z_MG) - E(z*-z0)| = {worst:.1e} (<= 1e-9), {nfree} free dofs")
    assert nfree <= 200
    assert worst <= 1e-9


def test_criterion_08_spectral_growth():
    t0 = time.perf_counter()
    res = run_experiment(ExperimentConfig("lambda"))
    slopes = {f: res.fits[f].exponent for f in FAMILIES}
    elapsed = time.perf_counter() - t0
    ok = all(s <= 2.2 for s in slopes.values()) and elapsed < 60
    record(8, ok, "Lambda_p exponents " + ", ".join(f"{f} {s:.2f}" for f, s in slopes.items())
           + f" (<= 2.2), {elapsed:.1f}s")
    assert all(s <= 2.2 for s in slopes.values())
    assert elapsed < 60


def _pcg():
    if "pcg" not in _cache:
        t0 = time.perf_counter()
        rows = []
        for family in ("voronoi", "hex"):
            cfg = ExperimentConfig("pcg", meshes=(family,), n=SOLVER_N[family], p_min=2, p_max=6)
            rows += run_experiment(cfg).rows
        _cache["pcg"] = (rows, time.perf_counter() - t0)
    return _cache["pcg"]


def _counts(rows, family, col):
    return [r[col] if isinstance(r[col], int) else np.inf for r in rows if r["mesh"] == family]


def test_criterion_09_baselines_grow():
    rows, elapsed = _pcg()
    for family in ("voronoi", "hex"):
        cgc = _counts(rows, family, "iters_cg")
        ic = _counts(rows, family, "iters_pcg_ic0")
        assert all(b > a for a, b in zip(cgc, cgc[1:])), (family, cgc)
        assert all(b >= a for a, b in zip(ic, ic[1:])) and ic[-1] > ic[0], (family, ic)
    assert elapsed < 300


@pytest.mark.xfail(strict=True, reason="PCG with the post-smoothing-only W-cycle is not uniform "
                   "in p on these meshes (README, Known deviations)")
def test_criterion_09_uniform_preconditioning():
    rows, elapsed = _pcg()
    parts, ok = [], True
    for family in ("voronoi", "hex"):
        mg = _counts(rows, family, "iters_pcg_mg_gs")
        cgc = _counts(rows, family, "iters_cg")
        ic = _counts(rows, family, "iters_pcg_ic0")
        ratio = max(mg) / min(mg)
        grow = all(b > a for a, b in zip(cgc, cgc[1:])) and ic[-1] > ic[0]
        ok &= ratio <= 2 and grow
        parts.append(f"{family} n={SOLVER_N[family]} mgGS {mg} ratio {ratio:.1f}; CG {cgc}; IC0 {ic}")
    record(9, ok and elapsed < 300, "; ".join(parts) + f" (need ratio <= 2), {elapsed:.0f}s")
    for family in ("voronoi", "hex"):
        mg = _counts(rows, family, "iters_pcg_mg_gs")
        assert max(mg) / min(mg) <= 2, (family, mg)


SMALL = {
    "table1": dict(meshes=("voronoi",), n=16, lloyd_iters=20, p_max=4),
    "rho": dict(meshes=("hex",), n=3, p_max=3, m=(4, 8)),
    "minsmooth": dict(meshes=("square", "voronoi"), n=9, lloyd_iters=20, p_max=3, m_max=20),
    "lambda": dict(meshes=("voronoi", "hex"), n=9, lloyd_iters=20, p_max=5),
    "pcg": dict(meshes=("voronoi",), n=16, lloyd_iters=20, p_max=3),
    "patchtest": dict(meshes=("voronoi",), n=16, lloyd_iters=20, p_max=3),
}


def test_criterion_10_determinism():
    same = {}
    for name, kw in SMALL.items():
        a = run_experiment(ExperimentConfig(name, seed=5, **kw)).to_csv()
        b = run_experiment(ExperimentConfig(name, seed=5, **kw)).to_csv()
        c = run_experiment(ExperimentConfig(name, seed=5, workers=2, **kw)).to_csv()
        same[name] = a == b == c
    bad = [k for k, v in same.items() if not v]
    record(10, not bad, f"byte-identical CSV for {len(same)} experiments (serial x2 and 2 workers); "
                        f"differing: {bad or 'none'}")
    assert not bad


if __name__ == "__main__":
    import sys

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
