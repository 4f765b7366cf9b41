"""W-cycle p-multigrid with re-assembled (non-inherited) coarse operators.

Level ``l`` of a :class:`Hierarchy` holds the VEM matrix assembled at its
own degree on the free dofs, the transfer from the next coarser degree and
the smoother data. The coarsest level is factorized and solved directly.
Cycles use post-smoothing only.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .transfer import build_prolongation
from .vem import assemble_global, prepare_elements

SMOOTHERS = ("richardson", "gs")


def _smoother_name(kind):
    if kind in ("gs", "sym_gauss_seidel", "gauss_seidel"):
        return "gs"
    if kind == "richardson":
        return "richardson"
    raise ValueError(f"unknown smoother {kind!r}; expected one of {SMOOTHERS}")


@dataclass
class SolveReport:
    """Outcome of an iterative solve.

    ``status`` is one of "converged", "maxit", "diverged" or "breakdown".
    """

    x: np.ndarray
    residuals: list
    converged: bool
    status: str
    wall_time: float = 0.0
    info: dict = field(default_factory=dict)

    @property
    def iterations(self):
        return len(self.residuals) - 1

    @property
    def rho(self):
        if self.iterations < 1 or self.residuals[0] == 0.0:
            return float("nan")
        return convergence_factor(self.residuals)


def convergence_factor(residuals):
    """Geometric mean reduction ``exp(log(r_N / r_0) / N)``.

    >>> round(convergence_factor([1.0, 0.5, 0.25]), 12)
    0.5
    """
    r = np.asarray(residuals, dtype=float)
    n = len(r) - 1
    if n < 1:
        raise ValueError("need at least one iteration")
    if r[0] <= 0.0:
        raise ValueError("initial residual must be positive")
    if r[-1] == 0.0:
        return 0.0
    return float(np.exp(np.log(r[-1] / r[0]) / n))


def estimate_lambda(K, iters=10, rng_seed=0):
    """Power-method estimate of the largest eigenvalue of the SPD matrix ``K``.

    Starts from a seeded Gaussian vector and returns the Rayleigh quotient
    after ``iters`` multiplications.
    """
    n = K.shape[0]
    rng = np.random.default_rng(rng_seed)
    x = rng.standard_normal(n)
    while not np.any(x):
        x = rng.standard_normal(n)
    x /= np.linalg.norm(x)
    for _ in range(iters):
        y = K @ x
        ny = np.linalg.norm(y)
        if ny == 0.0:
            return 0.0
        x = y / ny
    return float(x @ (K @ x))


def energy_norm(K, v):
    return float(np.sqrt(max(v @ (K @ v), 0.0)))


def smooth(kind, K, g, z, steps, lam=None, arrays=None, backend=None):
    """Apply ``steps`` smoothing iterations to ``K z = g`` and return the new ``z``.

    Richardson uses ``z += (g - K z) / lam``. Symmetrized Gauss-Seidel does
    forward sweeps on odd steps and backward sweeps on even steps.
    """
    kind = _smoother_name(kind)
    if steps < 0:
        raise ValueError("steps must be >= 0")
    z = np.array(z, dtype=float, copy=True)
    if steps == 0:
        return z
    if kind == "richardson":
        if lam is None:
            lam = estimate_lambda(K)
        if not lam > 0.0:
            raise ValueError("Richardson needs a positive eigenvalue bound")
        for _ in range(steps):
            z += (g - K @ z) / lam
        return z
    if arrays is None:
        arrays = kernels.csr_arrays(K)
    for i in range(1, steps + 1):
        if i % 2:
            kernels.gs_forward(arrays, g, z, backend)
        else:
            kernels.gs_backward(arrays, g, z, backend)
    return z


@dataclass
class Level:
    degree: int
    system: object
    K: sp.csr_matrix
    lam: float
    arrays: tuple = field(repr=False)
    transfer: object = None  # from the next coarser level
    lu: object = field(default=None, repr=False)

    @property
    def n(self):
        return self.K.shape[0]


@dataclass
class Hierarchy:
    """Levels ordered coarse to fine; ``f`` is the finest load vector."""

    levels: list
    f: np.ndarray
    mesh: object = field(repr=False, default=None)
    mode: str = "orthonormal"
    backend: str = None

    @property
    def finest(self):
        return self.levels[-1]

    @property
    def n_levels(self):
        return len(self.levels)

    @property
    def degrees(self):
        return [lev.degree for lev in self.levels]


def build_hierarchy(mesh, p, n_levels=None, f=1.0, mode="orthonormal", lambda_iters=10,
                    lambda_safety=1.0, rng_seed=0, elements=None, backend=None):
    """Assemble degrees ``p - n_levels + 1 .. p`` on ``mesh`` (homogeneous Dirichlet).

    ``n_levels`` defaults to ``p`` (coarsest level of degree 1).
    """
    if n_levels is None:
        n_levels = p
    if not 1 <= n_levels <= p:
        raise ValueError(f"need 1 <= levels <= p, got levels={n_levels}, p={p}")
    if elements is None:
        elements = prepare_elements(mesh, p)
    levels = []
    for q in range(p - n_levels + 1, p + 1):
        sysq = assemble_global(mesh, q, f if q == p else None, mode, elements=elements)
        K = sysq.K
        if np.any(K.diagonal() <= 0.0):
            raise ValueError(f"degree {q}: non-positive diagonal entry")
        lam = lambda_safety * estimate_lambda(K, lambda_iters, rng_seed)
        lev = Level(q, sysq, K, lam, kernels.csr_arrays(K))
        if levels:
            lev.transfer = build_prolongation(levels[-1].system.dof_map, sysq.dof_map, mesh)
        levels.append(lev)
    levels[0].lu = spla.splu(levels[0].K.tocsc())
    return Hierarchy(levels, levels[-1].system.f, mesh, mode, backend)


def mg_cycle(level, g, z0, m, hierarchy, smoother="richardson", recursion=2):
    """One multigrid iteration on level index ``level`` (0 = coarsest).

    ``recursion=2`` is the W-cycle, ``recursion=1`` a V-cycle.
    """
    lev = hierarchy.levels[level]
    if level == 0:
        return lev.lu.solve(np.asarray(g, dtype=float))
    z = np.array(z0, dtype=float, copy=True)
    P = lev.transfer.P_free
    rc = P.T @ (g - lev.K @ z)
    e = mg_cycle(level - 1, rc, np.zeros(P.shape[1]), m, hierarchy, smoother, recursion)
    for _ in range(recursion - 1):
        e = mg_cycle(level - 1, rc, e, m, hierarchy, smoother, recursion)
    z += P @ e
    return smooth(smoother, lev.K, g, z, m, lev.lam, lev.arrays, hierarchy.backend)


def mg_solve(hierarchy, f=None, z0=None, m=8, tol=1e-8, maxit=1000, smoother="richardson",
             recursion=2, divergence=1e6):
    """Iterate full cycles until ``||f - K z|| <= tol ||f||``.

    Stops early and reports "diverged" once the residual exceeds
    ``divergence`` times the initial one.
    """
    t0 = time.perf_counter()
    top = hierarchy.n_levels - 1
    K = hierarchy.finest.K
    f = hierarchy.f if f is None else np.asarray(f, dtype=float)
    z = np.zeros(K.shape[0]) if z0 is None else np.array(z0, dtype=float, copy=True)
    nf = np.linalg.norm(f)
    res = [float(np.linalg.norm(f - K @ z))]
    status = "maxit"
    while True:
        if res[-1] <= tol * nf:
            status = "converged"
            break
        if not np.isfinite(res[-1]) or res[-1] > divergence * res[0]:
            status = "diverged"
            break
        if len(res) > maxit:
            break
        z = mg_cycle(top, f, z, m, hierarchy, smoother, recursion)
        res.append(float(np.linalg.norm(f - K @ z)))
    return SolveReport(z, res, status == "converged", status, time.perf_counter() - t0,
                       {"m": m, "smoother": _smoother_name(smoother), "levels": hierarchy.n_levels})


def min_smoothing_steps(hierarchy, smoother="richardson", m_max=64, tol=1e-8, maxit=1000):
    """Smallest ``m`` in ``1..m_max`` for which :func:`mg_solve` converges.

    Returns 0 for a single-level hierarchy and None when no ``m`` works.
    """
    if hierarchy.n_levels == 1:
        return 0
    for m in range(1, m_max + 1):
        if mg_solve(hierarchy, m=m, tol=tol, maxit=maxit, smoother=smoother).converged:
            return m
    return None


def _smoothing_matrix(lev, kind, m):
    kind = _smoother_name(kind)
    K = lev.K.toarray()
    n = K.shape[0]
    if kind == "richardson":
        return np.linalg.matrix_power(np.eye(n) - K / lev.lam, m)
    lower = np.tril(K)
    upper = np.triu(K)
    Sf = np.eye(n) - np.linalg.solve(lower, K)
    Sb = np.eye(n) - np.linalg.solve(upper, K)
    S = np.eye(n)
    for i in range(1, m + 1):
        S = (Sf if i % 2 else Sb) @ S
    return S


def error_operator(hierarchy, m, smoother="richardson", level=None, recursion=2):
    """Dense error propagation matrix of one cycle on ``level`` (default finest).

    ``z* - MG(z0) = E (z* - z0)``. Intended for small systems only.
    """
    if level is None:
        level = hierarchy.n_levels - 1
    lev = hierarchy.levels[level]
    if level == 0:
        return np.zeros((lev.n, lev.n))
    Ec = error_operator(hierarchy, m, smoother, level - 1, recursion)
    coarse = hierarchy.levels[level - 1]
    P = lev.transfer.P_free.toarray()
    Kc = coarse.K.toarray()
    K = lev.K.toarray()
    proj = np.linalg.solve(Kc, P.T @ K)
    inner = np.eye(coarse.n) - np.linalg.matrix_power(Ec, recursion)
    return _smoothing_matrix(lev, smoother, m) @ (np.eye(lev.n) - P @ inner @ proj)
