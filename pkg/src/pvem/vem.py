"""p-version virtual elements for the Poisson problem.

Degrees of freedom per element ``E`` for degree ``p``:

* values at the vertices (loop order),
* values at the ``p - 1`` interior Gauss-Lobatto nodes of each edge,
* scaled moments ``(1/|E|) * int_E v b_alpha`` for ``|alpha| <= p - 2``,
  where ``b`` is the L2(E)-orthonormal basis (``mode="orthonormal"``) or the
  scaled monomials (``mode="monomial"``).

The local stiffness is the energy-projector consistency term plus the plain
Euclidean dof-dof stabilization of the non-polynomial remainder.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .quadrature import (
    element_basis,
    gauss_lobatto_1d,
    poly_dim,
    polygon_quadrature,
)

MODES = ("orthonormal", "monomial")


class VemError(RuntimeError):
    """Raised when an element or global system cannot be built."""


# ---------------------------------------------------------------------------
# dof enumeration


@dataclass
class DofMap:
    """Global enumeration: vertex dofs, then edge-interior dofs, then moments."""

    p: int
    n_vertex: int
    n_edge_internal: int
    n_moment: int
    element_dofs: list
    boundary: np.ndarray
    coords: np.ndarray
    edge_dofs: np.ndarray

    @property
    def n_dofs(self):
        return self.n_vertex + self.n_edge_internal + self.n_moment

    @property
    def n_moments_per_element(self):
        return poly_dim(self.p - 2)

    def moment_dofs(self, k):
        n = self.n_moments_per_element
        start = self.n_vertex + self.n_edge_internal + k * n
        return np.arange(start, start + n)

    @property
    def free(self):
        return np.flatnonzero(~self.boundary)


def local_dof_count(n_vertices, p):
    return n_vertices * p + poly_dim(p - 2)


def boundary_node_index(n_vertices, p):
    """(n_vertices, p + 1) local dof indices of the Gauss-Lobatto nodes per edge."""
    idx = np.empty((n_vertices, p + 1), dtype=np.int64)
    for i in range(n_vertices):
        idx[i, 0] = i
        idx[i, p] = (i + 1) % n_vertices
        idx[i, 1:p] = n_vertices + i * (p - 1) + np.arange(p - 1)
    return idx


def build_dof_map(mesh, p):
    """Enumerate the degrees of freedom of ``mesh`` at degree ``p >= 1``."""
    if p < 1:
        raise ValueError("p must be >= 1")
    nv, ne = mesh.n_vertices, mesh.n_edges
    n_edge = (p - 1) * ne
    nm = poly_dim(p - 2)
    n_mom = nm * mesh.n_elements
    edge_dofs = nv + np.arange(n_edge).reshape(ne, p - 1)
    element_dofs = []
    for k, loop in enumerate(mesh.elements):
        parts = [loop]
        for e, s in zip(mesh.element_edges[k], mesh.element_edge_signs[k]):
            parts.append(edge_dofs[e] if s > 0 else edge_dofs[e][::-1])
        parts.append(nv + n_edge + k * nm + np.arange(nm))
        element_dofs.append(np.concatenate(parts).astype(np.int64))
    n = nv + n_edge + n_mom
    boundary = np.zeros(n, dtype=bool)
    boundary[:nv] = mesh.boundary_vertex_flags
    boundary[edge_dofs[mesh.boundary_edge_flags].ravel()] = True
    coords = np.full((n, 2), np.nan)
    coords[:nv] = mesh.vertices
    if p > 1:
        xi = gauss_lobatto_1d(p + 1).nodes[1:-1]
        a = mesh.vertices[mesh.edges[:, 0]]
        b = mesh.vertices[mesh.edges[:, 1]]
        t = 0.5 * (1.0 + xi)
        pts = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        coords[nv:nv + n_edge] = pts.reshape(-1, 2)
    return DofMap(p, nv, n_edge, n_mom, element_dofs, boundary, coords, edge_dofs)


# ---------------------------------------------------------------------------
# element data shared between degrees


@dataclass
class ElementData:
    """Geometry, quadrature and orthonormal basis of one element."""

    geometry: object
    quad: object
    basis: object


def prepare_elements(mesh, degree):
    """Per-element data good for every ``p <= degree``.

    Using one orthonormal basis of the highest degree and truncating it keeps
    the moment functions of all levels bitwise identical.
    """
    data = []
    for k, geom in enumerate(mesh.geometries):
        quad = polygon_quadrature(geom.vertices, 2 * degree + 2, geom.centroid)
        data.append(ElementData(geom, quad, element_basis(geom, degree, quad, element=k)))
    return data


# ---------------------------------------------------------------------------
# local operators


@dataclass
class LocalElement:
    """Projector and stiffness matrices of one element.

    ``D`` maps polynomial coefficients (orthonormal basis of P_p) to dofs;
    ``PiNabla_star`` maps dofs to the coefficients of the energy projection;
    ``moment_readout`` turns moment dofs into ``int_E v m_gamma``.
    """

    geometry: object
    p: int
    mode: str
    basis_p: object
    quad: object
    D: np.ndarray
    B: np.ndarray
    G: np.ndarray
    PiNabla_star: np.ndarray
    PiNabla: np.ndarray
    moment_readout: np.ndarray
    Pi0_pm2: np.ndarray
    Pi0_pm1_enh: np.ndarray
    K_loc: np.ndarray
    edge_nodes: np.ndarray = field(repr=False)

    @property
    def basis_pm1(self):
        return self.basis_p.truncate(self.p - 1)

    @property
    def basis_pm2(self):
        return self.basis_p.truncate(self.p - 2) if self.p >= 2 else None

    @property
    def n_dofs(self):
        return self.D.shape[0]

    @property
    def n_boundary_dofs(self):
        return self.geometry.n_vertices * self.p

    def dofs_of_polynomial(self, coeffs):
        return self.D @ coeffs


def _edge_nodes(geom, p):
    xi = gauss_lobatto_1d(p + 1).nodes
    v = geom.vertices
    w = np.roll(v, -1, axis=0)
    t = 0.5 * (1.0 + xi)
    return v[:, None, :] + t[None, :, None] * (w - v)[:, None, :]


def local_element(geom, p, mode="orthonormal", basis=None, quad=None, element=None):
    """Build every local matrix of ``geom`` at degree ``p``.

    ``basis`` may be an orthonormal basis of degree >= p (it is truncated);
    ``quad`` must then be exact for twice that degree.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    if p < 1:
        raise ValueError("p must be >= 1")
    if quad is None:
        quad = polygon_quadrature(geom.vertices, 2 * p + 2, geom.centroid)
    if basis is None:
        basis = element_basis(geom, p, quad, element)
    basis = basis.truncate(p)
    nv = geom.n_vertices
    n_p = basis.dim
    n2 = poly_dim(p - 2)
    n_bnd = nv * p
    n_dof = n_bnd + n2
    area = geom.area
    gl = gauss_lobatto_1d(p + 1)
    bidx = boundary_node_index(nv, p)
    nodes = _edge_nodes(geom, p)

    # polynomial -> dofs
    D = np.empty((n_dof, n_p))
    D[:nv] = basis.eval(geom.vertices)
    if p > 1:
        D[nv:n_bnd] = basis.eval(nodes[:, 1:p].reshape(-1, 2))
    M = basis.eval(quad.points)
    WM = M * quad.weights[:, None]
    if n2:
        if mode == "orthonormal":
            dof_basis = M[:, :n2]
        else:
            dof_basis = basis.monomials.eval(quad.points)[:, :n2]
        D[n_bnd:] = (dof_basis.T @ WM) / area
        readout = np.linalg.inv(D[n_bnd:, :n2])
    else:
        readout = np.zeros((0, 0))

    # B[j, i] = a^E(phi_i, m_j) by integration by parts
    B = np.zeros((n_p, n_dof))
    if n2:
        lap = basis.laplacian(quad.points)
        lap_coef = lap.T @ WM[:, :n2]
        B[:, n_bnd:] -= lap_coef @ readout
    for i in range(nv):
        dn = basis.grad(nodes[i]) @ geom.normals[i]
        contrib = 0.5 * geom.edge_lengths[i] * gl.weights[:, None] * dn
        np.add.at(B.T, bidx[i], contrib)

    dM = basis.grad(quad.points)
    G = np.einsum("q,qjd,qkd->jk", quad.weights, dM, dM)
    G = 0.5 * (G + G.T)

    # constant part
    Bhat = B.copy()
    Bhat[0] = 0.0
    if p >= 2:
        Bhat[0, n_bnd:] = readout[0] / basis.C[0, 0]
    else:
        lengths = geom.edge_lengths
        Bhat[0, :nv] = 0.5 * (lengths + np.roll(lengths, 1))
    Ghat = Bhat @ D
    if np.linalg.cond(Ghat) > 1e14:
        raise VemError(f"element {element}: energy projector system is rank deficient")
    PiNabla_star = np.linalg.solve(Ghat, Bhat)
    PiNabla = D @ PiNabla_star

    S = np.eye(n_dof) - PiNabla
    K_loc = PiNabla_star.T @ G @ PiNabla_star + S.T @ S
    K_loc = 0.5 * (K_loc + K_loc.T)

    Pi0_pm2 = np.zeros((n2, n_dof))
    if n2:
        Pi0_pm2[:, n_bnd:] = readout
    # enhancing constraints: moments of order p-1 equal those of Pi0_{p-2} v,
    # which vanish against the orthonormal m_alpha, |alpha| = p-1
    Pi0_pm1_enh = np.zeros((poly_dim(p - 1), n_dof))
    Pi0_pm1_enh[:n2] = Pi0_pm2

    return LocalElement(
        geometry=geom, p=p, mode=mode, basis_p=basis, quad=quad, D=D, B=B, G=G,
        PiNabla_star=PiNabla_star, PiNabla=PiNabla, moment_readout=readout,
        Pi0_pm2=Pi0_pm2, Pi0_pm1_enh=Pi0_pm1_enh, K_loc=K_loc, edge_nodes=nodes,
    )


def local_projectors(geom, p, mode="orthonormal", **kwargs):
    return local_element(geom, p, mode, **kwargs)


def local_stiffness(geom, p, mode="orthonormal", **kwargs):
    return local_element(geom, p, mode, **kwargs).K_loc


def _evaluate(f, points):
    if f is None:
        return np.zeros(len(points))
    if np.isscalar(f):
        return np.full(len(points), float(f))
    return np.broadcast_to(np.asarray(f(points[:, 0], points[:, 1]), dtype=float), (len(points),))


def local_load(le, f):
    """Load vector ``int_E Pi0_{max(p-2,1)} f  vbar`` on the element ``le``.

    For ``p >= 2`` only moment entries are nonzero. With ``p == 2`` the
    degree-1 part of the projection pairs with moments of order ``p - 1``,
    which vanish under the enhancing constraints, so it drops out.
    """
    p = le.p
    n_bnd = le.n_boundary_dofs
    F = np.zeros(le.n_dofs)
    fq = _evaluate(f, le.quad.points)
    nproj = poly_dim(max(p - 2, 1))
    M = le.basis_p.eval(le.quad.points)[:, :nproj]
    coeffs = M.T @ (le.quad.weights * fq)
    if p >= 2:
        n2 = poly_dim(p - 2)
        F[n_bnd:] = coeffs[:n2] @ le.moment_readout
    else:
        mean_int = coeffs @ (M.T @ le.quad.weights)
        lengths = le.geometry.edge_lengths
        share = 0.5 * (lengths + np.roll(lengths, 1)) / lengths.sum()
        F[:le.geometry.n_vertices] = mean_int * share
    return F


# ---------------------------------------------------------------------------
# global system


@dataclass
class GlobalSystem:
    """Stiffness and load after symmetric elimination of Dirichlet dofs."""

    K: sp.csr_matrix
    f: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    dirichlet_values: np.ndarray
    dof_map: DofMap
    mode: str
    K_full: sp.csr_matrix
    f_full: np.ndarray

    @property
    def p(self):
        return self.dof_map.p

    def expand(self, u_free):
        u = np.zeros(self.dof_map.n_dofs)
        u[self.free] = u_free
        u[self.fixed] = self.dirichlet_values
        return u


def assemble_global(mesh, p, f=None, mode="orthonormal", dirichlet_g=None, elements=None):
    """Assemble the degree-``p`` system on ``mesh``.

    ``f`` and ``dirichlet_g`` are vectorized callables ``(x, y) -> values``
    (or scalars/None). ``elements`` is an optional :func:`prepare_elements`
    result of degree >= ``p``.
    """
    if elements is None:
        elements = prepare_elements(mesh, p)
    dm = build_dof_map(mesh, p)
    rows, cols, vals = [], [], []
    F = np.zeros(dm.n_dofs)
    for k, ed in enumerate(elements):
        le = local_element(ed.geometry, p, mode, basis=ed.basis, quad=ed.quad, element=k)
        idx = dm.element_dofs[k]
        rows.append(np.repeat(idx, len(idx)))
        cols.append(np.tile(idx, len(idx)))
        vals.append(le.K_loc.ravel())
        if f is not None:
            np.add.at(F, idx, local_load(le, f))
    n = dm.n_dofs
    K_full = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    ).tocsr()
    K_full.sum_duplicates()
    K_full.sort_indices()
    fixed = np.flatnonzero(dm.boundary)
    free = np.flatnonzero(~dm.boundary)
    if len(free) == 0:
        raise VemError("no free degrees of freedom after Dirichlet elimination")
    g = _evaluate(dirichlet_g, dm.coords[fixed]).copy() if len(fixed) else np.zeros(0)
    K = K_full[free][:, free].tocsr()
    rhs = F[free] - K_full[free][:, fixed] @ g
    return GlobalSystem(K, rhs, free, fixed, g, dm, mode, K_full, F)


def interpolate(mesh, dof_map, u, mode="orthonormal", elements=None):
    """Dof vector of the function ``u`` (vectorized callable)."""
    p = dof_map.p
    vals = np.zeros(dof_map.n_dofs)
    nb = dof_map.n_vertex + dof_map.n_edge_internal
    vals[:nb] = _evaluate(u, dof_map.coords[:nb])
    n2 = poly_dim(p - 2)
    if n2:
        if elements is None:
            elements = prepare_elements(mesh, p)
        for k, ed in enumerate(elements):
            pts = ed.quad.points
            if mode == "orthonormal":
                b = ed.basis.eval(pts)[:, :n2]
            else:
                b = ed.basis.monomials.eval(pts)[:, :n2]
            vals[dof_map.moment_dofs(k)] = b.T @ (ed.quad.weights * _evaluate(u, pts)) / ed.geometry.area
    return vals


def condition_number(K, dense_limit=4000):
    """Spectral condition number of a symmetric positive definite matrix."""
    n = K.shape[0]
    if n <= dense_limit:
        A = K.toarray() if sp.issparse(K) else np.asarray(K, dtype=float)
        if not np.allclose(A, A.T, rtol=0, atol=1e-12 * np.abs(A).max()):
            raise VemError("matrix is not symmetric")
        ev = sla.eigvalsh(A)
        lo, hi = ev[0], ev[-1]
    else:
        K = sp.csc_matrix(K)
        hi = spla.eigsh(K, k=1, which="LA", return_eigenvectors=False)[0]
        lo = spla.eigsh(K, k=1, sigma=0.0, which="LM", return_eigenvectors=False)[0]
    if lo <= 0.0:
        raise VemError(f"matrix is not positive definite (lambda_min = {lo:.3e})")
    return float(hi / lo)


def export_coo(K, path):
    """Write ``row col value`` lines (0-based, full precision)."""
    C = sp.coo_matrix(K)
    with open(path, "w") as fh:
        fh.write(f"% {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for i, j, v in zip(C.row, C.col, C.data):
            fh.write(f"{i} {j} {float(v)!r}\n")
