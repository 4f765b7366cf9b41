"""Polygonal meshes of the unit square: data model, generators, checks and I/O.

Three families are provided: axis-aligned squares, quasi-regular hexagons
and centroidal (Lloyd-regularized) Voronoi tessellations. Hexagonal meshes
are the clipped Voronoi diagram of a triangular lattice, so both polygonal
families share the same clipping and vertex-merging machinery.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial import Delaunay, QhullError, cKDTree

MERGE_TOL = 1e-9


class MeshFormatError(ValueError):
    """Raised when a mesh file cannot be parsed."""


@dataclass(eq=False)
class PolyMesh:
    """Conforming polygonal mesh.

    Attributes
    ----------
    vertices : (N, 2) float array
    elements : list of int arrays
        Counter-clockwise vertex loops.
    diagnostics : list of str
        Notes left by the generator (perturbed seeds, collapsed edges, ...).
        Not part of mesh equality.
    """

    vertices: np.ndarray
    elements: list
    diagnostics: list = field(default_factory=list)

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        self.elements = [np.asarray(e, dtype=np.int64) for e in self.elements]

    def __eq__(self, other):
        if not isinstance(other, PolyMesh):
            return NotImplemented
        return (
            self.vertices.shape == other.vertices.shape
            and np.array_equal(self.vertices, other.vertices)
            and len(self.elements) == len(other.elements)
            and all(np.array_equal(a, b) for a, b in zip(self.elements, other.elements))
        )

    __hash__ = None

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_elements(self):
        return len(self.elements)

    @property
    def n_edges(self):
        return len(self.edges)

    @cached_property
    def _topology(self):
        edge_ids = {}
        edges = []
        edge_elements = []
        element_edges = []
        element_signs = []
        for k, loop in enumerate(self.elements):
            ids = np.empty(len(loop), dtype=np.int64)
            signs = np.empty(len(loop), dtype=np.int64)
            for i, a in enumerate(loop):
                b = loop[(i + 1) % len(loop)]
                key = (min(a, b), max(a, b))
                e = edge_ids.get(key)
                if e is None:
                    e = edge_ids[key] = len(edges)
                    edges.append(key)
                    edge_elements.append([])
                edge_elements[e].append(k)
                ids[i] = e
                signs[i] = 1 if a < b else -1
            element_edges.append(ids)
            element_signs.append(signs)
        return (np.array(edges, dtype=np.int64).reshape(-1, 2), edge_elements,
                element_edges, element_signs)

    @property
    def edges(self):
        """(E, 2) array of vertex pairs, lower index first."""
        return self._topology[0]

    @property
    def edge_elements(self):
        """Per edge, the list of adjacent element indices."""
        return self._topology[1]

    @property
    def element_edges(self):
        """Per element, global edge id of local edge i (vertex i -> i+1)."""
        return self._topology[2]

    @property
    def element_edge_signs(self):
        """Per element, +1 where the local edge runs along the global orientation."""
        return self._topology[3]

    @cached_property
    def boundary_edge_flags(self):
        return np.array([len(adj) == 1 for adj in self.edge_elements], dtype=bool)

    @cached_property
    def boundary_vertex_flags(self):
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[self.edges[self.boundary_edge_flags].ravel()] = True
        return flags

    def element_geometry(self, k):
        return ElementGeometry.from_vertices(self.vertices[self.elements[k]])

    @cached_property
    def geometries(self):
        return [self.element_geometry(k) for k in range(self.n_elements)]


@dataclass(frozen=True, eq=False)
class ElementGeometry:
    """Geometric data of one polygon (vertices counter-clockwise)."""

    vertices: np.ndarray
    area: float
    centroid: np.ndarray
    diameter: float
    edge_lengths: np.ndarray
    tangents: np.ndarray
    normals: np.ndarray

    @classmethod
    def from_vertices(cls, vertices):
        v = np.asarray(vertices, dtype=float)
        w = np.roll(v, -1, axis=0)
        cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
        area = 0.5 * cross.sum()
        centroid = ((v + w) * cross[:, None]).sum(axis=0) / (6.0 * area)
        d = w - v
        lengths = np.hypot(d[:, 0], d[:, 1])
        tangents = d / lengths[:, None]
        normals = np.column_stack([tangents[:, 1], -tangents[:, 0]])
        diff = v[:, None, :] - v[None, :, :]
        diameter = float(np.sqrt((diff ** 2).sum(axis=-1)).max())
        return cls(v, float(area), centroid, diameter, lengths, tangents, normals)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def perimeter(self):
        return float(self.edge_lengths.sum())


def signed_area(points):
    p = np.asarray(points, dtype=float)
    q = np.roll(p, -1, axis=0)
    return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))


# ---------------------------------------------------------------------------
# generators


def generate_square_mesh(n):
    """``n`` x ``n`` axis-aligned squares on the unit square."""
    if n < 1:
        raise ValueError("n must be >= 1")
    t = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(t, t)
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    elements = []
    for j in range(n):
        for i in range(n):
            a = j * (n + 1) + i
            elements.append([a, a + 1, a + n + 2, a + n + 1])
    return PolyMesh(vertices, elements)


def generate_hexagonal_mesh(n):
    """Quasi-regular hexagons, roughly ``n`` per row, clipped at the boundary.

    The cells are the Voronoi cells of a staggered lattice; rows are spaced
    so that an integer number of them fits the square, which stretches the
    hexagons slightly in the vertical direction.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rows = max(1, int(round(2.0 * n / np.sqrt(3.0))))
    seeds = []
    for j in range(rows):
        y = (j + 0.5) / rows
        if j % 2 == 0:
            xs = (np.arange(n) + 0.5) / n
        else:
            xs = np.arange(n + 1) / n
        seeds.extend((x, y) for x in xs)
    cells = _clipped_voronoi_cells(np.array(seeds))
    return _mesh_from_cells(cells, collapse=0.0)


def generate_voronoi_lloyd_mesh(n_seeds, lloyd_iters=100, rng_seed=0,
                                collapse_tol=1e-2):
    """Centroidal Voronoi tessellation of the unit square.

    Seeds are drawn uniformly with ``numpy.random.default_rng(rng_seed)``,
    then moved ``lloyd_iters`` times to the centroid of their clipped cell.
    Edges shorter than ``collapse_tol / sqrt(n_seeds)`` are collapsed after
    the last iteration (set ``collapse_tol=0`` to keep them).
    """
    if n_seeds < 2:
        raise ValueError("n_seeds must be >= 2")
    rng = np.random.default_rng(rng_seed)
    seeds = rng.random((n_seeds, 2))
    diagnostics = []
    seeds = _separate_seeds(seeds, rng, diagnostics)
    for _ in range(lloyd_iters):
        cells = _clipped_voronoi_cells(seeds)
        seeds = np.array([_polygon_centroid(c) for c in cells])
        seeds = _separate_seeds(seeds, rng, diagnostics)
    cells = _clipped_voronoi_cells(seeds)
    mesh = _mesh_from_cells(cells, collapse=collapse_tol / np.sqrt(n_seeds))
    mesh.diagnostics[:0] = diagnostics
    return mesh


def _separate_seeds(seeds, rng, diagnostics, tol=1e-12):
    while True:
        pairs = cKDTree(seeds).query_pairs(tol, output_type="ndarray")
        if len(pairs) == 0:
            return seeds
        idx = np.unique(pairs[:, 1])
        diagnostics.append(f"perturbed {len(idx)} coincident seed(s)")
        seeds = seeds.copy()
        seeds[idx] = np.clip(seeds[idx] + 1e-6 * rng.standard_normal((len(idx), 2)), 0.0, 1.0)


def _polygon_centroid(poly):
    v = np.asarray(poly)
    w = np.roll(v, -1, axis=0)
    cross = v[:, 0] * w[:, 1] - w[:, 0] * v[:, 1]
    return ((v + w) * cross[:, None]).sum(axis=0) / (3.0 * cross.sum())


def _clip_halfplane(poly, normal, offset):
    """Keep the part of a convex polygon with normal . x <= offset."""
    out = []
    k = len(poly)
    vals = [normal[0] * p[0] + normal[1] * p[1] - offset for p in poly]
    for i in range(k):
        p, q = poly[i], poly[(i + 1) % k]
        fp, fq = vals[i], vals[(i + 1) % k]
        if fp <= 0.0:
            out.append(p)
        if (fp < 0.0 < fq) or (fq < 0.0 < fp):
            t = fp / (fp - fq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _voronoi_neighbors(seeds):
    n = len(seeds)
    try:
        tri = Delaunay(seeds)
    except (QhullError, ValueError):
        return [[j for j in range(n) if j != i] for i in range(n)]
    indptr, indices = tri.vertex_neighbor_vertices
    return [sorted(indices[indptr[i]:indptr[i + 1]]) for i in range(n)]


def _clipped_voronoi_cells(seeds):
    square = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    cells = []
    for i, nbrs in enumerate(_voronoi_neighbors(seeds)):
        si = seeds[i]
        poly = square
        for j in nbrs:
            sj = seeds[j]
            normal = sj - si
            offset = 0.5 * float(normal @ (si + sj))
            poly = _clip_halfplane(poly, normal, offset)
            if not poly:
                break
        cells.append(np.array(poly, dtype=float))
    return cells


def _snap_to_square(points, tol=1e-12):
    pts = points.copy()
    pts[np.abs(pts) < tol] = 0.0
    pts[np.abs(pts - 1.0) < tol] = 1.0
    return pts


def _mesh_from_cells(cells, collapse=0.0):
    """Merge per-cell vertex lists into a conforming mesh."""
    diagnostics = []
    flat = _snap_to_square(np.vstack(cells))
    owner = np.repeat(np.arange(len(cells)), [len(c) for c in cells])
    rep = _cluster(flat, MERGE_TOL)
    vertices, loops = _renumber(flat, rep, owner, len(cells))
    if collapse > 0.0:
        vertices, loops, n_coll = _collapse_short_edges(vertices, loops, collapse)
        if n_coll:
            diagnostics.append(f"collapsed {n_coll} short edge(s)")
    return PolyMesh(vertices, loops, diagnostics)


def _cluster(points, tol):
    parent = np.arange(len(points))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for a, b in sorted(map(tuple, cKDTree(points).query_pairs(tol, output_type="ndarray"))):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)
    return np.array([find(i) for i in range(len(points))])


def _renumber(points, rep, owner, n_cells):
    new_id = {}
    vertices = []
    loops = [[] for _ in range(n_cells)]
    for i, r in enumerate(rep):
        if r not in new_id:
            new_id[r] = len(vertices)
            vertices.append(points[r])
        loop = loops[owner[i]]
        vid = new_id[r]
        if not loop or loop[-1] != vid:
            loop.append(vid)
    for loop in loops:
        while len(loop) > 1 and loop[0] == loop[-1]:
            loop.pop()
    return np.array(vertices), loops


def _on_side(x):
    return (x[0] == 0.0, x[0] == 1.0, x[1] == 0.0, x[1] == 1.0)


def _collapse_short_edges(vertices, loops, tol):
    vertices = vertices.copy()
    parent = np.arange(len(vertices))
    count = 0
    while True:
        best = None
        for loop in loops:
            k = len(loop)
            for i in range(k):
                a, b = loop[i], loop[(i + 1) % k]
                length = np.linalg.norm(vertices[a] - vertices[b])
                if length < tol and (best is None or length < best[0]):
                    best = (length, min(a, b), max(a, b))
        if best is None:
            break
        _, a, b = best
        sa, sb = _on_side(vertices[a]), _on_side(vertices[b])
        ca, cb = sum(sa) == 2, sum(sb) == 2
        if ca or (any(sa) and not any(sb)):
            target = vertices[a]
        elif cb or (any(sb) and not any(sa)):
            target = vertices[b]
        elif any(sa) and any(sb) and not any(x and y for x, y in zip(sa, sb)):
            break  # straddles a corner without containing it; leave it alone
        else:
            target = 0.5 * (vertices[a] + vertices[b])
        vertices[a] = target
        parent[b] = a
        new_loops = []
        for loop in loops:
            out = []
            for v in loop:
                v = a if v == b else v
                if not out or out[-1] != v:
                    out.append(v)
            while len(out) > 1 and out[0] == out[-1]:
                out.pop()
            new_loops.append(out)
        loops = new_loops
        count += 1
    used = sorted({v for loop in loops for v in loop})
    remap = {v: i for i, v in enumerate(used)}
    return vertices[used], [[remap[v] for v in loop] for loop in loops], count


# ---------------------------------------------------------------------------
# validation


def _segments_intersect(p1, p2, q1, q2):
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    return d1 * d2 < 0 and d3 * d4 < 0


def _is_simple(pts):
    k = len(pts)
    for i in range(k):
        for j in range(i + 2, k):
            if i == 0 and j == k - 1:
                continue
            if _segments_intersect(pts[i], pts[(i + 1) % k], pts[j], pts[(j + 1) % k]):
                return False
    return True


def _overlap(p1, p2, q1, q2, tol):
    """Positive-length collinear overlap of two segments."""
    d = p2 - p1
    length = np.linalg.norm(d)
    if length == 0.0:
        return False
    t = d / length
    nrm = np.array([-t[1], t[0]])
    if abs((q1 - p1) @ nrm) > tol * length or abs((q2 - p1) @ nrm) > tol * length:
        return False
    s = sorted([(q1 - p1) @ t, (q2 - p1) @ t])
    return min(length, s[1]) - max(0.0, s[0]) > tol * length


def validate_mesh(m):
    """Return a list of violated mesh invariants (empty when the mesh is valid)."""
    report = []
    nv = m.n_vertices
    for k, loop in enumerate(m.elements):
        if len(loop) < 3:
            report.append(f"element {k}: fewer than 3 vertices")
            continue
        if loop.min() < 0 or loop.max() >= nv:
            report.append(f"element {k}: vertex index out of range")
            continue
        if len(set(loop.tolist())) != len(loop):
            report.append(f"element {k}: repeated vertex in loop")
            continue
        pts = m.vertices[loop]
        area = signed_area(pts)
        if area <= 0.0:
            report.append(f"element {k}: orientation (signed area {area:.3e} <= 0)")
        if not _is_simple(pts):
            report.append(f"element {k}: self-intersecting loop")
    if report:
        return report

    scale = float(np.ptp(m.vertices, axis=0).max()) or 1.0
    pairs = cKDTree(m.vertices).query_pairs(1e-12 * scale, output_type="ndarray")
    for a, b in sorted(map(tuple, pairs)):
        report.append(f"vertices {a} and {b} coincide: non-conforming edge")

    for e, adj in enumerate(m.edge_elements):
        if len(adj) > 2:
            a, b = m.edges[e]
            report.append(f"edge ({a},{b}): shared by {len(adj)} elements, non-conforming edge")

    bnd = np.flatnonzero(m.boundary_edge_flags)
    segs = m.vertices[m.edges[bnd]]
    lo = segs.min(axis=1)
    hi = segs.max(axis=1)
    for ii in range(len(bnd)):
        cand = np.flatnonzero(np.all(lo <= hi[ii] + 1e-12, axis=1) & np.all(hi >= lo[ii] - 1e-12, axis=1))
        for jj in cand[cand > ii]:
            if _overlap(segs[ii, 0], segs[ii, 1], segs[jj, 0], segs[jj, 1], 1e-10):
                a, b = m.edges[bnd[ii]]
                c, d = m.edges[bnd[jj]]
                report.append(f"edges ({a},{b}) and ({c},{d}) overlap: non-conforming edge")

    total = sum(signed_area(m.vertices[loop]) for loop in m.elements)
    domain = 0.0
    for e in bnd:
        k = m.edge_elements[e][0]
        loop = m.elements[k]
        i = int(np.flatnonzero(m.element_edges[k] == e)[0])
        p, q = m.vertices[loop[i]], m.vertices[loop[(i + 1) % len(loop)]]
        domain += 0.5 * (p[0] * q[1] - q[0] * p[1])
    if abs(total - domain) > 1e-12 * abs(domain):
        report.append(f"area mismatch: elements {total!r} vs domain {domain!r}")

    n_local = sum(len(loop) for loop in m.elements)
    n_bnd = int(m.boundary_edge_flags.sum())
    if n_local != 2 * (m.n_edges - n_bnd) + n_bnd:
        report.append("edge adjacency count mismatch")
    return report


# ---------------------------------------------------------------------------
# file I/O


def save_mesh(m, path):
    """Write the plain-text ``polymesh 1`` format (full float precision)."""
    lines = ["polymesh 1", f"vertices {m.n_vertices}"]
    lines += [f"{float(x)!r} {float(y)!r}" for x, y in m.vertices]
    lines.append(f"elements {m.n_elements}")
    lines += [" ".join([str(len(loop))] + [str(int(v)) for v in loop]) for loop in m.elements]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path):
    """Read a mesh written by :func:`save_mesh`; raises :class:`MeshFormatError`."""
    text = Path(path).read_text().splitlines()
    it = iter(enumerate(text, start=1))

    def next_line(what):
        for lineno, line in it:
            if line.strip():
                return lineno, line.split()
        raise MeshFormatError(f"line {len(text) + 1}: unexpected end of file while reading {what}")

    lineno, tok = next_line("header")
    if tok != ["polymesh", "1"]:
        raise MeshFormatError(f"line {lineno}: expected header 'polymesh 1'")
    lineno, tok = next_line("vertex count")
    if len(tok) != 2 or tok[0] != "vertices":
        raise MeshFormatError(f"line {lineno}: expected 'vertices N'")
    try:
        nv = int(tok[1])
    except ValueError:
        raise MeshFormatError(f"line {lineno}: bad vertex count {tok[1]!r}") from None
    vertices = np.empty((nv, 2))
    for i in range(nv):
        lineno, tok = next_line(f"vertex {i}")
        if len(tok) != 2:
            raise MeshFormatError(f"line {lineno}: vertex {i} needs 2 coordinates")
        try:
            vertices[i] = [float(tok[0]), float(tok[1])]
        except ValueError:
            raise MeshFormatError(f"line {lineno}: vertex {i} has non-numeric coordinates") from None
    lineno, tok = next_line("element count")
    if len(tok) != 2 or tok[0] != "elements":
        raise MeshFormatError(f"line {lineno}: expected 'elements M'")
    try:
        ne = int(tok[1])
    except ValueError:
        raise MeshFormatError(f"line {lineno}: bad element count {tok[1]!r}") from None
    elements = []
    for k in range(ne):
        lineno, tok = next_line(f"element {k}")
        try:
            vals = [int(t) for t in tok]
        except ValueError:
            raise MeshFormatError(f"line {lineno}: element {k} has non-integer entries") from None
        if not vals or vals[0] != len(vals) - 1 or vals[0] < 3:
            raise MeshFormatError(f"line {lineno}: element {k} has an inconsistent vertex count")
        loop = vals[1:]
        bad = [v for v in loop if v < 0 or v >= nv]
        if bad:
            raise MeshFormatError(
                f"line {lineno}: element {k} references vertex {bad[0]} out of range 0..{nv - 1}")
        elements.append(loop)
    return PolyMesh(vertices, elements)
