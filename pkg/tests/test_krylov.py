import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from pvem import kernels
from pvem.geometry import generate_square_mesh
from pvem.krylov import BreakdownError, Preconditioner, cg, ic0, identity_preconditioner, mg_preconditioner, pcg
from pvem.multigrid import build_hierarchy, energy_norm, smooth
from pvem.vem import assemble_global

BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


def spd(rng, n, shift=1.0):
    A = rng.standard_normal((n, n))
    return A @ A.T + shift * np.eye(n)


def test_cg_examples():
    rep = cg(sp.identity(5, format="csr"), np.arange(1.0, 6.0))
    assert rep.converged and rep.iterations == 1
    K = sp.diags(np.arange(1.0, 11.0)).tocsr()
    rep = cg(K, np.ones(10), tol=1e-12)
    assert rep.converged and rep.iterations <= 10
    with pytest.raises(BreakdownError):
        cg(sp.diags([1.0, -1.0]).tocsr(), np.ones(2))


def test_cg_energy_error_monotone(rng):
    K = sp.csr_matrix(spd(rng, 40, 0.1))
    f = rng.standard_normal(40)
    xs = np.linalg.solve(K.toarray(), f)
    errs = [energy_norm(K, xs - cg(K, f, tol=0.0, maxit=k).x) for k in range(25)]
    assert all(b <= a * (1 + 1e-10) for a, b in zip(errs, errs[1:]))


def test_pcg_without_preconditioner_matches_cg(rng):
    K = sp.csr_matrix(spd(rng, 30))
    f = rng.standard_normal(30)
    a = cg(K, f, tol=1e-10)
    b = pcg(K, f, None, tol=1e-10)
    assert a.iterations == b.iterations
    assert np.allclose(a.residuals, b.residuals, rtol=1e-12, atol=0)
    assert np.abs(a.x - b.x).max() < 1e-12 * np.abs(a.x).max()


def test_exact_preconditioner_one_iteration(rng):
    K = sp.csr_matrix(spd(rng, 25))
    lu = spla.splu(K.tocsc())
    rep = pcg(K, rng.standard_normal(25), Preconditioner("exact", lu.solve), tol=1e-10)
    assert rep.converged and rep.iterations == 1


@pytest.mark.parametrize("backend", BACKENDS)
def test_ic0_exact_cases(rng, backend):
    K = sp.diags(rng.uniform(1, 5, 12)).tocsr()
    M = ic0(K, backend=backend)
    assert M.info["shift"] == 0.0
    assert pcg(K, np.ones(12), M, tol=1e-12).iterations == 1
    T = sp.diags([-np.ones(19), 2.5 * np.ones(20), -np.ones(19)], [-1, 0, 1]).tocsr()
    rep = pcg(T, rng.standard_normal(20), ic0(T, backend=backend), tol=1e-12)
    assert rep.converged and rep.iterations == 1


@pytest.mark.parametrize("backend", BACKENDS)
def test_ic0_shift_retry(backend):
    # SPD but with a pattern on which zero-fill IC breaks down
    K = sp.csr_matrix(np.array([[3.0, -2.0, 0.0, 2.0],
                                [-2.0, 3.0, -2.0, 0.0],
                                [0.0, -2.0, 3.0, -2.0],
                                [2.0, 0.0, -2.0, 3.0]]))
    assert np.linalg.eigvalsh(K.toarray())[0] > 0
    M = ic0(K, backend=backend)
    assert M.info["shifts"][0] == 0.0 and M.info["shift"] > 0.0
    assert pcg(K, np.ones(4), M, tol=1e-10).converged


def test_backends_agree(rng):
    if kernels.BACKEND != "cython":
        pytest.skip("compiled kernels not built")
    K = assemble_global(generate_square_mesh(3), 3).K
    g = rng.standard_normal(K.shape[0])
    a = smooth("gs", K, g, np.zeros_like(g), 5, backend="python")
    b = smooth("gs", K, g, np.zeros_like(g), 5, backend="cython")
    assert np.abs(a - b).max() < 1e-12 * np.abs(a).max()
    ra = ic0(K, backend="python")(g)
    rb = ic0(K, backend="cython")(g)
    assert np.abs(ra - rb).max() < 1e-12 * np.abs(ra).max()


@given(st.floats(-1e3, 1e3).filter(lambda a: abs(a) > 1e-3), st.integers(0, 100))
@settings(max_examples=15, deadline=None)
def test_mg_preconditioner_linear(a, seed):
    h = _hierarchy()
    M = mg_preconditioner(h, m=4, smoother="gs")
    r = np.random.default_rng(seed).standard_normal(h.finest.n)
    s = np.random.default_rng(seed + 1).standard_normal(h.finest.n)
    Mr = M(r)
    assert np.abs(M(a * r) - a * Mr).max() <= 1e-12 * abs(a) * np.abs(Mr).max()
    assert np.abs(M(r + s) - Mr - M(s)).max() <= 1e-11 * np.abs(Mr).max()


_cache = {}


def _hierarchy():
    if "h" not in _cache:
        _cache["h"] = build_hierarchy(generate_square_mesh(4), 3)
    return _cache["h"]


def test_pcg_diagonal_rescaling_invariance(rng):
    n = 30
    K = spd(rng, n)
    Minv = np.linalg.inv(K + np.diag(rng.uniform(0, 3, n)))  # SPD approximate inverse
    f = rng.standard_normal(n)
    d = rng.uniform(0.2, 5.0, n)
    D = np.diag(d)
    Ks = D @ K @ D
    Minv_s = np.linalg.inv(D) @ Minv @ np.linalg.inv(D)
    for k in range(1, 12):
        x = pcg(sp.csr_matrix(K), f, Preconditioner("m", lambda r: Minv @ r), tol=0.0, maxit=k).x
        xs = pcg(sp.csr_matrix(Ks), d * f, Preconditioner("m", lambda r: Minv_s @ r), tol=0.0, maxit=k).x
        assert np.abs(d * xs - x).max() <= 1e-10 * np.abs(x).max()


def test_pcg_mg_and_flexible():
    h = _hierarchy()
    K, f = h.finest.K, h.f
    for flexible in (False, True):
        rep = pcg(K, f, mg_preconditioner(h, m=8, smoother="gs"), tol=1e-6, flexible=flexible)
        assert rep.converged and rep.iterations < 30
        assert np.linalg.norm(f - K @ rep.x) <= 1e-6 * np.linalg.norm(f)
    plain = pcg(K, f, identity_preconditioner(), tol=1e-6)
    assert plain.iterations > rep.iterations


def test_pcg_breakdown_flagged():
    K = sp.diags([1.0, -1.0, 2.0]).tocsr()
    rep = pcg(K, np.array([0.0, 1.0, 0.0]))
    assert rep.status == "breakdown" and not rep.converged and "message" in rep.info
