"""Quadrature rules and polynomial bases on polygons.

1D Gauss-Legendre and Gauss-Lobatto rules, a collapsed-coordinate rule on
triangles, polygon quadrature by sub-triangulation, scaled monomials
``((x - x_E) / h_E) ** alpha`` and their L2(E)-orthonormalization.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre


class DegenerateElementError(ValueError):
    """Raised when an element's polynomial Gram matrix is numerically singular."""


@dataclass(frozen=True)
class QuadRule1D:
    nodes: np.ndarray
    weights: np.ndarray

    def integrate(self, values):
        return float(np.dot(self.weights, values))


@lru_cache(maxsize=None)
def _gauss_legendre(n):
    x, w = legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre_1d(n):
    """``n``-point Gauss-Legendre rule on [-1, 1], exact for degree 2n-1."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return QuadRule1D(*_gauss_legendre(n))


@lru_cache(maxsize=None)
def _gauss_lobatto(n):
    if n == 2:
        x = np.array([-1.0, 1.0])
    else:
        # interior nodes are the roots of P'_{n-1}
        c = np.zeros(n)
        c[-1] = 1.0
        inner = np.sort(legendre.legroots(legendre.legder(c)).real)
        for _ in range(3):  # Newton polish
            d1 = legendre.legval(inner, legendre.legder(c))
            d2 = legendre.legval(inner, legendre.legder(c, 2))
            inner = inner - d1 / d2
        inner = 0.5 * (inner - inner[::-1])  # exact symmetry
        x = np.concatenate([[-1.0], inner, [1.0]])
    c = np.zeros(n)
    c[-1] = 1.0
    pn = legendre.legval(x, c)
    w = 2.0 / (n * (n - 1) * pn ** 2)
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_lobatto_1d(n):
    """``n``-point Gauss-Lobatto rule on [-1, 1] (endpoints included), exact for degree 2n-3."""
    if n < 2:
        raise ValueError("Gauss-Lobatto rules need n >= 2")
    return QuadRule1D(*_gauss_lobatto(n))


@lru_cache(maxsize=None)
def triangle_rule(order):
    """Rule on the reference triangle (0,0),(1,0),(0,1), exact for degree ``order``.

    Returns barycentric-like coordinates ``(s, t)`` of shape (M, 2) and
    weights summing to 1/2. Collapsed (Duffy) Gauss-Legendre product.
    """
    n = max(1, (order + 3) // 2)
    x, w = _gauss_legendre(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * w
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    s = U
    t = V * (1.0 - U)
    weights = (WU * WV * (1.0 - U)).ravel()
    pts = np.column_stack([s.ravel(), t.ravel()])
    pts.setflags(write=False)
    weights.setflags(write=False)
    return pts, weights


@dataclass(frozen=True)
class PolygonQuad:
    points: np.ndarray
    weights: np.ndarray
    ear_clipped: bool = False

    def integrate(self, values):
        return np.tensordot(self.weights, values, axes=(0, 0))


def _ear_clip(v):
    idx = list(range(len(v)))
    tris = []

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    while len(idx) > 3:
        for k in range(len(idx)):
            i0, i1, i2 = idx[k - 1], idx[k], idx[(k + 1) % len(idx)]
            a, b, c = v[i0], v[i1], v[i2]
            if cross(a, b, c) <= 0.0:
                continue
            inside = False
            for j in idx:
                if j in (i0, i1, i2):
                    continue
                p = v[j]
                if cross(a, b, p) >= 0 and cross(b, c, p) >= 0 and cross(c, a, p) >= 0:
                    inside = True
                    break
            if not inside:
                tris.append((i0, i1, i2))
                del idx[k]
                break
        else:
            raise DegenerateElementError("ear clipping failed: polygon is not simple")
    tris.append(tuple(idx))
    return [(v[a], v[b], v[c]) for a, b, c in tris]


def polygon_quadrature(vertices, order, centroid=None):
    """Quadrature on a polygon exact for polynomials of degree ``order``.

    The polygon is split into triangles joining ``centroid`` (default: the
    area centroid) to each edge. When some of these triangles are not
    positively oriented, ear clipping is used instead and the returned rule
    carries ``ear_clipped=True``.
    """
    v = np.asarray(vertices, dtype=float)
    if centroid is None:
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        centroid = ((v + w) * cross[:, None]).sum(axis=0) / (3.0 * cross.sum())
    c = np.asarray(centroid, dtype=float)
    a = v
    b = np.roll(v, -1, axis=0)
    det = (a[:, 0] - c[0]) * (b[:, 1] - c[1]) - (a[:, 1] - c[1]) * (b[:, 0] - c[0])
    ear = bool(np.any(det <= 0.0))
    if ear:
        tris = _ear_clip(v)
        P0 = np.array([t[0] for t in tris])
        P1 = np.array([t[1] for t in tris])
        P2 = np.array([t[2] for t in tris])
    else:
        P0 = np.broadcast_to(c, a.shape)
        P1, P2 = a, b
    ref, wref = triangle_rule(order)
    e1 = P1 - P0
    e2 = P2 - P0
    jac = np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
    pts = P0[:, None, :] + ref[None, :, 0:1] * e1[:, None, :] + ref[None, :, 1:2] * e2[:, None, :]
    weights = (jac[:, None] * wref[None, :]).ravel()
    return PolygonQuad(pts.reshape(-1, 2), weights, ear)


def monomial_exponents(degree):
    """Graded-lex multi-indices: (0,0), (1,0), (0,1), (2,0), (1,1), (0,2), ..."""
    return [(d - j, j) for d in range(degree + 1) for j in range(d + 1)]


def poly_dim(degree):
    return 0 if degree < 0 else (degree + 1) * (degree + 2) // 2


class ScaledMonomials:
    """Scaled monomials ``q_alpha(x) = ((x - center) / h) ** alpha``."""

    def __init__(self, center, h, degree):
        self.center = np.asarray(center, dtype=float)
        self.h = float(h)
        self.degree = int(degree)
        self.exponents = np.array(monomial_exponents(degree), dtype=np.int64).reshape(-1, 2)

    @property
    def dim(self):
        return len(self.exponents)

    def _powers(self, points):
        xi = (np.asarray(points, dtype=float).reshape(-1, 2) - self.center) / self.h
        k = self.degree + 1
        px = np.ones((len(xi), k))
        py = np.ones((len(xi), k))
        for d in range(1, k):
            px[:, d] = px[:, d - 1] * xi[:, 0]
            py[:, d] = py[:, d - 1] * xi[:, 1]
        return px, py

    def eval(self, points):
        px, py = self._powers(points)
        a, b = self.exponents.T
        return px[:, a] * py[:, b]

    def grad(self, points):
        px, py = self._powers(points)
        a, b = self.exponents.T
        am = np.maximum(a - 1, 0)
        bm = np.maximum(b - 1, 0)
        gx = a * px[:, am] * py[:, b] / self.h
        gy = b * px[:, a] * py[:, bm] / self.h
        return np.stack([gx, gy], axis=-1)

    def laplacian(self, points):
        px, py = self._powers(points)
        a, b = self.exponents.T
        am = np.maximum(a - 2, 0)
        bm = np.maximum(b - 2, 0)
        return (a * (a - 1) * px[:, am] * py[:, b] + b * (b - 1) * px[:, a] * py[:, bm]) / self.h ** 2


class PolyBasis:
    """Polynomial basis ``m = C q`` over scaled monomials ``q``.

    Row ``i`` of ``C`` holds the monomial coefficients of ``m_i``. ``C`` is
    lower triangular, so the leading ``poly_dim(l)`` functions span P_l.
    """

    def __init__(self, monomials, coeffs):
        self.monomials = monomials
        self.C = np.asarray(coeffs, dtype=float)

    @property
    def degree(self):
        return self.monomials.degree

    @property
    def dim(self):
        return self.C.shape[0]

    def truncate(self, degree):
        n = poly_dim(degree)
        mono = ScaledMonomials(self.monomials.center, self.monomials.h, degree)
        return PolyBasis(mono, self.C[:n, :n])

    def eval(self, points):
        return self.monomials.eval(points) @ self.C.T

    def grad(self, points):
        return np.einsum("pkd,jk->pjd", self.monomials.grad(points), self.C)

    def laplacian(self, points):
        return self.monomials.laplacian(points) @ self.C.T


def orthonormalize(monomials, quad, element=None):
    """L2-orthonormalize ``monomials`` with respect to the rule ``quad``.

    Two passes of Cholesky on the quadrature Gram matrix; the result is lower
    triangular in graded-lex order. ``quad`` must be exact for degree
    ``2 * monomials.degree``.
    """
    Q = monomials.eval(quad.points)
    WQ = Q * quad.weights[:, None]
    C = np.eye(monomials.dim)
    for _ in range(2):
        M = Q @ C.T
        G = (WQ @ C.T).T @ M
        G = 0.5 * (G + G.T)
        try:
            L = np.linalg.cholesky(G)
        except np.linalg.LinAlgError:
            where = "" if element is None else f"element {element}: "
            raise DegenerateElementError(
                f"{where}Gram matrix of degree-{monomials.degree} monomials is numerically singular"
            ) from None
        C = np.linalg.solve(L, C)
        C = np.tril(C)
    return PolyBasis(monomials, C)


def element_basis(geom, degree, quad=None, element=None):
    """Orthonormal basis of P_degree on the element described by ``geom``."""
    if quad is None:
        quad = polygon_quadrature(geom.vertices, 2 * degree + 2, geom.centroid)
    mono = ScaledMonomials(geom.centroid, geom.diameter, degree)
    return orthonormalize(mono, quad, element)
