import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from pvem import kernels
from pvem.geometry import generate_square_mesh
from pvem.multigrid import (
    build_hierarchy,
    convergence_factor,
    energy_norm,
    error_operator,
    estimate_lambda,
    mg_cycle,
    mg_solve,
    min_smoothing_steps,
    smooth,
)


@pytest.fixture(scope="module")
def sq4():
    return generate_square_mesh(4)


def test_convergence_factor_examples():
    assert convergence_factor([3.0, 3.0]) == 1.0
    assert abs(convergence_factor([1.0, 0.5, 0.25, 0.125]) - 0.5) < 1e-15
    assert abs(convergence_factor(0.9 ** np.arange(21)) - 0.9) < 1e-12
    with pytest.raises(ValueError):
        convergence_factor([0.0, 0.0])
    with pytest.raises(ValueError):
        convergence_factor([1.0])


def test_estimate_lambda():
    assert abs(estimate_lambda(sp.identity(7, format="csr")) - 1.0) < 1e-14
    lam = estimate_lambda(sp.diags([1.0, 2.0, 5.0]).tocsr())
    assert 4.9 <= lam <= 5.0
    K = sp.diags(np.arange(1.0, 30.0)).tocsr()
    assert estimate_lambda(K, rng_seed=4) == estimate_lambda(K, rng_seed=4)


def test_smooth_trivial(rng):
    K = sp.identity(6, format="csr")
    g, z = rng.standard_normal(6), rng.standard_normal(6)
    assert np.array_equal(smooth("richardson", K, g, z, 0, 1.0), z)
    assert np.array_equal(smooth("gs", K, g, z, 0), z)
    assert np.allclose(smooth("richardson", K, g, z, 1, 1.0), g, atol=1e-15)
    with pytest.raises(ValueError):
        smooth("jacobi", K, g, z, 1)
    with pytest.raises(ValueError):
        smooth("gs", K, g, z, -1)


def test_richardson_energy_monotone(rng):
    A = rng.standard_normal((50, 50))
    K = sp.csr_matrix(A @ A.T + 0.5 * np.eye(50))
    lam = np.linalg.eigvalsh(K.toarray())[-1]
    g = rng.standard_normal(50)
    zs = spla.spsolve(K.tocsc(), g)
    z = np.zeros(50)
    errs = [energy_norm(K, zs - z)]
    for _ in range(30):
        z = smooth("richardson", K, g, z, 1, lam)
        errs.append(energy_norm(K, zs - z))
    assert all(b <= a * (1 + 1e-12) for a, b in zip(errs, errs[1:]))


def test_gs_sweeps_match_dense(rng):
    A = rng.standard_normal((20, 20))
    K = sp.csr_matrix(A @ A.T + 20 * np.eye(20))
    g, z = rng.standard_normal(20), rng.standard_normal(20)
    Kd = K.toarray()
    zf = z + np.linalg.solve(np.tril(Kd), g - Kd @ z)
    zb = zf + np.linalg.solve(np.triu(Kd), g - Kd @ zf)
    assert np.allclose(smooth("gs", K, g, z, 1), zf, atol=1e-12)
    assert np.allclose(smooth("sym_gauss_seidel", K, g, z, 2), zb, atol=1e-12)


def test_gs_zero_diagonal_raises():
    K = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 2.0]]))
    for backend in ("python", kernels.BACKEND):
        with pytest.raises(ZeroDivisionError):
            smooth("gs", K, np.ones(2), np.zeros(2), 1, backend=backend)


def test_hierarchy_non_inherited(sq4):
    h = build_hierarchy(sq4, 3)
    assert h.degrees == [1, 2, 3]
    for lo, hi in zip(h.levels, h.levels[1:]):
        P = hi.transfer.P_free
        galerkin = (P.T @ hi.K @ P).toarray()
        assert lo.K.shape == galerkin.shape
        assert np.abs(galerkin - lo.K.toarray()).max() > 1e-6  # not a RAP product
    with pytest.raises(ValueError):
        build_hierarchy(sq4, 3, n_levels=4)


def test_cycle_examples(sq4, rng):
    h = build_hierarchy(sq4, 3)
    g = rng.standard_normal(h.levels[0].n)
    z = mg_cycle(0, g, np.zeros_like(g), 8, h)
    K1 = h.levels[0].K
    assert np.linalg.norm(g - K1 @ z) <= 1e-12 * np.linalg.norm(g)
    n = h.finest.n
    assert np.all(mg_cycle(2, np.zeros(n), np.zeros(n), 4, h) == 0.0)

    h2 = build_hierarchy(sq4, 2)
    f = h2.f
    zs = spla.spsolve(h2.finest.K.tocsc(), f)
    z1 = mg_cycle(1, f, np.zeros_like(f), 8, h2, "richardson")
    assert energy_norm(h2.finest.K, zs - z1) < energy_norm(h2.finest.K, zs)


def test_solve_zero_rhs(sq4):
    h = build_hierarchy(sq4, 3)
    rep = mg_solve(h, f=np.zeros(h.finest.n))
    assert rep.converged and rep.iterations == 0


def test_two_level_convergence_factor(sq4):
    h = build_hierarchy(sq4, 3, n_levels=2)
    rep = mg_solve(h, m=8, smoother="richardson")
    assert rep.converged and abs(rep.rho - 0.69) <= 0.15
    assert np.linalg.norm(h.f - h.finest.K @ rep.x) <= 1e-8 * np.linalg.norm(h.f)
    bad = mg_solve(h, m=2, smoother="richardson")
    assert not bad.converged and bad.status in ("maxit", "diverged")


def test_min_smoothing(sq4):
    assert min_smoothing_steps(build_hierarchy(sq4, 1)) == 0
    h = build_hierarchy(sq4, 2)
    m0 = min_smoothing_steps(h, "richardson")
    assert m0 is not None and m0 <= 4
    for m in range(m0, m0 + 4):  # monotone above the minimum on this case
        assert mg_solve(h, m=m, smoother="richardson").converged


@pytest.mark.parametrize("smoother", ["richardson", "gs"])
def test_error_operator_matches_cycle(sq4, rng, smoother):
    h = build_hierarchy(generate_square_mesh(3), 3)
    assert h.finest.n <= 200
    K = h.finest.K
    f = rng.standard_normal(h.finest.n)
    zs = spla.spsolve(K.tocsc(), f)
    for m in (2, 5):
        E = error_operator(h, m, smoother)
        z0 = rng.standard_normal(h.finest.n)
        z = mg_cycle(h.n_levels - 1, f, z0, m, h, smoother)
        assert np.abs((zs - z) - E @ (zs - z0)).max() < 1e-9 * max(1.0, np.abs(zs - z0).max())


def test_two_level_contraction(sq4):
    # The coarse matrix is re-assembled, so one cycle is not a K-contraction
    # by itself; the asymptotic rate (spectral radius) must be below one and
    # powers of E must contract in the energy norm.
    h = build_hierarchy(sq4, 2)
    m0 = min_smoothing_steps(h, "richardson")
    Kd = h.finest.K.toarray()
    Lc = np.linalg.cholesky(Kd)
    for m in (m0, m0 + 2, 8):
        E = error_operator(h, m, "richardson")
        assert np.max(np.abs(np.linalg.eigvals(E))) < 1.0
        Ek = np.linalg.matrix_power(E, 200)
        assert np.linalg.norm(Lc.T @ Ek @ np.linalg.inv(Lc.T), 2) < 1.0


def test_rho_trends(sq4):
    h = build_hierarchy(sq4, 3, n_levels=2)
    rhos = {}
    for sm in ("richardson", "gs"):
        for m in (4, 6, 8):
            rep = mg_solve(h, m=m, smoother=sm)
            rhos[sm, m] = rep.rho if rep.converged else np.inf
    for sm in ("richardson", "gs"):
        assert rhos[sm, 4] >= rhos[sm, 6] >= rhos[sm, 8]
    assert all(rhos["gs", m] <= rhos["richardson", m] for m in (4, 6, 8))
