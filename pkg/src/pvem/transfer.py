"""Prolongation between dof spaces of consecutive degree on one mesh.

Boundary dofs of a coarse function are interpolated along each edge (the
trace is a polynomial of degree ``p - 1``), vertex values are copied and
interior moments of order up to ``p - 3`` are carried over unchanged. Fine
moments of order ``p - 2`` are set to zero, which is how the enhancing
constraints of the fine space act on a coarse function. Restriction is the
transpose, applied on the fly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from numpy.polynomial import legendre

from .quadrature import gauss_lobatto_1d, poly_dim


def edge_prolongation_1d(p):
    """(p+1, p) Lagrange evaluation matrix from the p-point to the (p+1)-point Gauss-Lobatto nodes.

    Examples
    --------
    >>> edge_prolongation_1d(2) @ [0.0, 1.0]
    array([0. , 0.5, 1. ])
    """
    if p < 2:
        raise ValueError("edge prolongation needs p >= 2")
    xc = gauss_lobatto_1d(p).nodes
    xf = gauss_lobatto_1d(p + 1).nodes
    Vc = legendre.legvander(xc, p - 1)
    Vf = legendre.legvander(xf, p - 1)
    L = np.linalg.solve(Vc.T, Vf.T).T
    # endpoints are shared nodes: make those rows exact unit rows
    L[0] = 0.0
    L[0, 0] = 1.0
    L[-1] = 0.0
    L[-1, -1] = 1.0
    return L


@dataclass
class TransferPair:
    """Prolongation ``P`` (fine x coarse); restriction is ``P.T``."""

    P: sp.csr_matrix
    coarse_free: np.ndarray
    fine_free: np.ndarray

    def __post_init__(self):
        self.P_free = self.P[self.fine_free][:, self.coarse_free].tocsr()

    @property
    def R(self):
        return self.P.T

    @property
    def shape(self):
        return self.P.shape


def build_prolongation(dof_coarse, dof_fine, mesh):
    """Assemble the prolongation from degree ``p - 1`` to degree ``p``."""
    pc, p = dof_coarse.p, dof_fine.p
    if p - pc != 1:
        raise ValueError(f"degrees must differ by one, got {pc} -> {p}")
    nv = mesh.n_vertices
    rows, cols, vals = [], [], []

    # vertices
    rows.append(np.arange(nv))
    cols.append(np.arange(nv))
    vals.append(np.ones(nv))

    # edge-internal dofs along the canonical orientation
    L = edge_prolongation_1d(p)[1:p]  # (p-1, p) rows for fine interior nodes
    for e, (a, b) in enumerate(mesh.edges):
        coarse = np.concatenate([[a], dof_coarse.edge_dofs[e], [b]])
        fine = dof_fine.edge_dofs[e]
        rows.append(np.repeat(fine, p))
        cols.append(np.tile(coarse, p - 1))
        vals.append(L.ravel())

    # moments up to order p-3 copied, order p-2 left as zero rows
    nk = poly_dim(p - 3)
    if nk:
        for k in range(mesh.n_elements):
            rows.append(dof_fine.moment_dofs(k)[:nk])
            cols.append(dof_coarse.moment_dofs(k))
            vals.append(np.ones(nk))

    P = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dof_fine.n_dofs, dof_coarse.n_dofs),
    ).tocsr()
    P.eliminate_zeros()
    P.sort_indices()
    return TransferPair(P, dof_coarse.free, dof_fine.free)


def _check(vec, n, what):
    vec = np.asarray(vec)
    if vec.shape[0] != n:
        raise ValueError(f"{what} vector has length {vec.shape[0]}, expected {n}")
    return vec


def apply_prolongation(tp, coarse_vector, free=False):
    P = tp.P_free if free else tp.P
    return P @ _check(coarse_vector, P.shape[1], "coarse")


def apply_restriction(tp, fine_vector, free=False):
    """Return ``P.T @ fine_vector`` (on free dofs when ``free`` is set)."""
    P = tp.P_free if free else tp.P
    return P.T @ _check(fine_vector, P.shape[0], "fine")
