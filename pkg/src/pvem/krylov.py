"""Conjugate gradients with optional multigrid or IC(0) preconditioning."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import kernels
from .multigrid import SolveReport, mg_cycle


class BreakdownError(ArithmeticError):
    """CG met a non-positive curvature ``p^T K p``."""


@dataclass
class Preconditioner:
    """``apply(r)`` returns an approximation of ``K^{-1} r``."""

    kind: str
    apply: Callable
    info: dict = field(default_factory=dict)

    def __call__(self, r):
        return self.apply(r)


def identity_preconditioner():
    return Preconditioner("none", lambda r: np.array(r, dtype=float, copy=True))


def mg_preconditioner(hierarchy, m=8, smoother="gs", recursion=2):
    """One multigrid cycle from a zero initial guess (a fixed linear map)."""
    top = hierarchy.n_levels - 1
    n = hierarchy.finest.n

    def apply(r):
        return mg_cycle(top, r, np.zeros(n), m, hierarchy, smoother, recursion)

    return Preconditioner("mg", apply, {"m": m, "smoother": smoother, "recursion": recursion,
                                        "levels": hierarchy.n_levels})


def ic0(K, max_attempts=40, backend=None):
    """Zero-fill incomplete Cholesky preconditioner.

    A failed factorization is retried on ``K + alpha I`` with ``alpha``
    starting at ``1e-3 * max(diag K)`` and doubling; the shifts tried are
    kept in ``info["shifts"]``.
    """
    arrays = kernels.csr_arrays(K)
    shifts = [0.0]
    factor = kernels.ic0_factor(arrays, 0.0, backend)
    alpha = 1e-3 * float(np.max(sp.csr_matrix(K).diagonal()))
    while factor is None:
        if len(shifts) >= max_attempts:
            raise ArithmeticError(f"IC(0) failed after {len(shifts)} shifts")
        shifts.append(alpha)
        factor = kernels.ic0_factor(arrays, alpha, backend)
        alpha *= 2.0
    factor = tuple(factor)

    def apply(r):
        y = np.array(r, dtype=float, copy=True)
        kernels.lower_solve(factor, y, backend)
        kernels.lower_transpose_solve(factor, y, backend)
        return y

    return Preconditioner("ic0", apply, {"shift": shifts[-1], "shifts": shifts})


def cg(K, f, x0=None, tol=1e-6, maxit=1000):
    """Plain conjugate gradients; stops when ``||r|| <= tol ||f||``.

    Raises
    ------
    BreakdownError
        If ``p^T K p <= 0`` (``K`` is not positive definite).
    """
    t0 = time.perf_counter()
    f = np.asarray(f, dtype=float)
    x = np.zeros_like(f) if x0 is None else np.array(x0, dtype=float, copy=True)
    r = f - K @ x
    target = tol * np.linalg.norm(f)
    rr = r @ r
    res = [float(np.sqrt(rr))]
    d = r.copy()
    status = "maxit"
    while True:
        if res[-1] <= target:
            status = "converged"
            break
        if len(res) > maxit:
            break
        Kd = K @ d
        curv = d @ Kd
        if curv <= 0.0:
            raise BreakdownError(f"non-positive curvature {curv:.3e} at iteration {len(res) - 1}")
        alpha = rr / curv
        x += alpha * d
        r -= alpha * Kd
        rr_new = r @ r
        d = r + (rr_new / rr) * d
        rr = rr_new
        res.append(float(np.sqrt(rr)))
    return SolveReport(x, res, status == "converged", status, time.perf_counter() - t0)


def pcg(K, f, M=None, x0=None, tol=1e-6, maxit=1000, flexible=False):
    """Preconditioned CG on the true residual.

    ``flexible=True`` uses the Polak-Ribiere choice of ``beta``, which keeps
    the method stable when ``M`` is not exactly symmetric (such as a
    post-smoothing-only multigrid cycle). A breakdown is reported through
    ``status == "breakdown"`` instead of an exception.
    """
    t0 = time.perf_counter()
    if M is None:
        M = identity_preconditioner()
    f = np.asarray(f, dtype=float)
    x = np.zeros_like(f) if x0 is None else np.array(x0, dtype=float, copy=True)
    r = f - K @ x
    target = tol * np.linalg.norm(f)
    res = [float(np.linalg.norm(r))]
    info = {"preconditioner": M.kind, "flexible": flexible}
    status = "maxit"
    d = r_prev = None
    rz = 0.0
    while True:
        if res[-1] <= target:
            status = "converged"
            break
        if len(res) > maxit:
            break
        z = M(r)
        rz_new = r @ z
        if d is None:
            d = z.copy()
        else:
            num = (r - r_prev) @ z if flexible else rz_new
            d = z + (num / rz) * d
        rz = rz_new
        Kd = K @ d
        curv = d @ Kd
        if curv <= 0.0 or rz <= 0.0:
            status = "breakdown"
            info["message"] = ("preconditioner is not positive definite; retry with flexible=True"
                               if M.kind == "mg" and not flexible else "non-positive curvature")
            break
        alpha = rz / curv
        x += alpha * d
        r_prev = r
        r = r - alpha * Kd
        res.append(float(np.linalg.norm(r)))
    return SolveReport(x, res, status == "converged", status, time.perf_counter() - t0, info)
