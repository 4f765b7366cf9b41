"""Experiment runners: condition numbers, convergence factors, minimal
smoothing, spectral growth, PCG comparisons and patch tests.

Every runner takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentResult` whose rows are written as CSV. Rows contain no
timings, so two runs with the same configuration give identical files.
"""

from __future__ import annotations

import csv
import io
import itertools
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache

import numpy as np

from .geometry import generate_hexagonal_mesh, generate_square_mesh, generate_voronoi_lloyd_mesh
from .krylov import cg, ic0, mg_preconditioner, pcg
from .multigrid import build_hierarchy, estimate_lambda, mg_solve, min_smoothing_steps
from .vem import assemble_global, condition_number, interpolate, prepare_elements

SCHEMA = "pvem-bench/1"
MESH_FAMILIES = ("square", "voronoi", "hex")
DEFAULT_SIZE = {"square": 8, "voronoi": 64, "hex": 7}
EXPERIMENTS = ("table1", "rho", "minsmooth", "lambda", "pcg", "patchtest")

# per-experiment defaults for fields left as None
_DEFAULTS = {
    "table1": dict(meshes=("voronoi",), p_min=1, p_max=8),
    "rho": dict(meshes=("square",), p_min=2, p_max=5, levels=(2, 3, 4), m=(2, 4, 6, 8),
                tol=1e-8),
    "minsmooth": dict(meshes=MESH_FAMILIES, p_min=2, p_max=6, levels=(2, 3, 4), tol=1e-8),
    "lambda": dict(meshes=MESH_FAMILIES, p_min=1, p_max=8),
    "pcg": dict(meshes=("voronoi", "hex"), p_min=1, p_max=6, m=(8,), tol=1e-6),
    "patchtest": dict(meshes=MESH_FAMILIES, p_min=1, p_max=5, tol=1e-8),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """Parameters of one experiment; ``None`` fields take experiment defaults.

    ``n`` is the number of cells per side for squares and hexagons and the
    number of seeds for Voronoi-Lloyd meshes.
    """

    experiment: str = "table1"
    meshes: tuple = None
    n: int = None
    seed: int = 0
    lloyd_iters: int = 100
    p_min: int = None
    p_max: int = None
    levels: tuple = None
    smoother: str = "richardson"
    m: tuple = None
    tol: float = None
    maxit: int = 1000
    m_max: int = 64
    lambda_iters: int = 10
    lambda_safety: float = 1.0
    mode: str = "orthonormal"
    cycle: str = "W"
    flexible: bool = False
    workers: int = 1
    out: str = None

    def resolved(self):
        """Copy with experiment defaults filled in, validated."""
        if self.experiment not in EXPERIMENTS:
            raise ValueError(f"unknown experiment {self.experiment!r}")
        updates = {k: v for k, v in _DEFAULTS[self.experiment].items() if getattr(self, k) is None}
        cfg = replace(self, **updates)
        for mesh in cfg.meshes:
            if mesh not in MESH_FAMILIES:
                raise ValueError(f"unknown mesh family {mesh!r}")
        if not 1 <= cfg.p_min <= cfg.p_max <= 8:
            raise ValueError(f"degree range must lie in [1, 8], got {cfg.p_min}..{cfg.p_max}")
        if cfg.cycle not in ("W", "V"):
            raise ValueError("cycle must be W or V")
        if cfg.smoother not in ("richardson", "gs"):
            raise ValueError("smoother must be richardson or gs")
        if cfg.levels is not None and min(cfg.levels) < 1:
            raise ValueError("levels must be >= 1")
        if cfg.workers < 1:
            raise ValueError("workers must be >= 1")
        return cfg

    def mesh_size(self, family):
        return DEFAULT_SIZE[family] if self.n is None else self.n

    @property
    def recursion(self):
        return 2 if self.cycle == "W" else 1


def _parse_value(name, text):
    text = text.strip()
    if name in ("meshes", "levels", "m"):
        items = [t for t in text.replace(",", " ").split() if t]
        return tuple(items) if name == "meshes" else tuple(int(t) for t in items)
    if name in ("out", "experiment", "smoother", "mode", "cycle"):
        return text
    if name == "flexible":
        return text.lower() in ("1", "true", "yes", "on")
    if name in ("tol", "lambda_safety"):
        return float(text)
    return int(text)


def load_config(path, **overrides):
    """Read ``key = value`` lines (``#`` comments) into an :class:`ExperimentConfig`."""
    names = {f.name for f in fields(ExperimentConfig)}
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            key = "meshes" if key == "mesh" else key
            if key not in names:
                raise ValueError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, val)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


# ---------------------------------------------------------------------------
# rate fits


@dataclass
class RateFit:
    """Least-squares fit in log space.

    ``model="algebraic"``: ``y = C p**s``; ``model="exponential"``:
    ``y = a exp(b p)``.
    """

    model: str
    params: dict
    r2: float
    residual: float

    @property
    def exponent(self):
        return self.params["s"] if self.model == "algebraic" else self.params["b"]

    def describe(self):
        body = " ".join(f"{k}={v!r}" for k, v in self.params.items())
        return f"{self.model} {body} r2={self.r2!r}"


def _loglinear(x, y):
    y = np.log(np.asarray(y, dtype=float))
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(res @ res) / ss if ss > 0 else 1.0
    return coef, r2, float(np.sqrt(res @ res))


def fit_algebraic(p, y):
    (s, logc), r2, res = _loglinear(np.log(np.asarray(p, dtype=float)), y)
    return RateFit("algebraic", {"C": float(np.exp(logc)), "s": float(s)}, r2, res)


def fit_exponential(p, y):
    (b, loga), r2, res = _loglinear(np.asarray(p, dtype=float), y)
    return RateFit("exponential", {"a": float(np.exp(loga)), "b": float(b)}, r2, res)


# ---------------------------------------------------------------------------
# results and CSV


@dataclass
class ExperimentResult:
    experiment: str
    columns: list
    rows: list
    fits: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.errors

    def to_csv(self):
        buf = io.StringIO()
        buf.write(f"# schema: {SCHEMA} {self.experiment}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_fmt(row.get(c, "")) for c in self.columns])
        for key in sorted(self.fits):
            buf.write(f"# fit {key}: {self.fits[key].describe()}\n")
        return buf.getvalue()

    def write(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    def column(self, name, **match):
        return [r[name] for r in self.rows if all(r.get(k) == v for k, v in match.items())]


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


# ---------------------------------------------------------------------------
# shared setup (cached per process)


@lru_cache(maxsize=16)
def make_mesh(family, n, seed=0, lloyd_iters=100):
    if family == "square":
        return generate_square_mesh(n)
    if family == "hex":
        return generate_hexagonal_mesh(n)
    if family == "voronoi":
        return generate_voronoi_lloyd_mesh(n, lloyd_iters, seed)
    raise ValueError(f"unknown mesh family {family!r}")


@lru_cache(maxsize=32)
def _elements(family, n, seed, lloyd_iters, degree):
    return prepare_elements(make_mesh(family, n, seed, lloyd_iters), degree)


def _mesh_args(cfg, family):
    return family, cfg.mesh_size(family), cfg.seed, cfg.lloyd_iters


def _hierarchy(cfg, family, p, n_levels):
    args = _mesh_args(cfg, family)
    return build_hierarchy(make_mesh(*args), p, n_levels, f=1.0, mode=cfg.mode,
                           lambda_iters=cfg.lambda_iters, lambda_safety=cfg.lambda_safety,
                           rng_seed=cfg.seed, elements=_elements(*args, p))


def _run_cells(fn, cfg, cells):
    """Evaluate ``fn(cfg, cell)`` for every cell; results keep the cell order."""
    if cfg.workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            out = list(pool.map(_guarded, itertools.repeat(fn), itertools.repeat(cfg), cells))
    else:
        out = [_guarded(fn, cfg, c) for c in cells]
    rows, errors = [], []
    for cell, (res, err) in zip(cells, out):
        if err is not None:
            errors.append(f"{cell}: {err}")
        rows.extend(res)
    return rows, errors


def _guarded(fn, cfg, cell):
    try:
        return fn(cfg, cell), None
    except Exception as exc:  # a failed cell must not stop the sweep
        return [], f"{type(exc).__name__}: {exc}"


def _level_pairs(cfg):
    pairs = []
    for p in range(max(cfg.p_min, 2), cfg.p_max + 1):
        for k in cfg.levels:
            if 2 <= k <= p:
                pairs.append((p, k))
    return pairs


# ---------------------------------------------------------------------------
# experiments


def _table1_cell(cfg, cell):
    family, p = cell
    args = _mesh_args(cfg, family)
    mesh = make_mesh(*args)
    el = _elements(*args, p)
    row = {"mesh": family, "p": p}
    for mode in ("orthonormal", "monomial"):
        try:
            row[f"kappa_{mode}"] = condition_number(assemble_global(mesh, p, None, mode, elements=el).K)
        except Exception as exc:  # eigensolver trouble marks the row, run continues
            row[f"kappa_{mode}"] = "failed"
            row["status"] = f"failed: {type(exc).__name__}"
    row.setdefault("status", "ok")
    return [row]


def run_table1(cfg):
    """Condition numbers in both moment bases with algebraic/exponential fits (p >= 3)."""
    cfg = replace(cfg, experiment="table1").resolved()
    cells = [(f, p) for f in cfg.meshes for p in range(cfg.p_min, cfg.p_max + 1)]
    rows, errors = _run_cells(_table1_cell, cfg, cells)
    result = ExperimentResult("table1", ["mesh", "p", "kappa_orthonormal", "kappa_monomial", "status"],
                              rows, errors=errors)
    for family in cfg.meshes:
        sel = [r for r in rows if r["mesh"] == family and r["p"] >= 3 and r["status"] == "ok"]
        if len(sel) >= 2:
            ps = [r["p"] for r in sel]
            result.fits[f"{family} orthonormal"] = fit_algebraic(ps, [r["kappa_orthonormal"] for r in sel])
            result.fits[f"{family} monomial"] = fit_exponential(ps, [r["kappa_monomial"] for r in sel])
    return result


def _rho_cell(cfg, cell):
    family, p, k = cell
    h = _hierarchy(cfg, family, p, k)
    rows = []
    for m in cfg.m:
        rep = mg_solve(h, m=m, tol=cfg.tol, maxit=cfg.maxit, smoother=cfg.smoother,
                       recursion=cfg.recursion)
        rows.append({"mesh": family, "p": p, "K": k, "m": m, "smoother": cfg.smoother,
                     "rho": rep.rho, "iterations": rep.iterations, "status": rep.status,
                     "converged": "yes" if rep.converged else "x"})
    return rows


def run_rho_sweep(cfg):
    """Convergence factor for every (mesh, p, K, m); "x" marks non-convergence."""
    cfg = replace(cfg, experiment="rho").resolved()
    cells = [(f, p, k) for f in cfg.meshes for p, k in _level_pairs(cfg)]
    rows, errors = _run_cells(_rho_cell, cfg, cells)
    cols = ["mesh", "p", "K", "m", "smoother", "rho", "iterations", "status", "converged"]
    return ExperimentResult("rho", cols, rows, errors=errors)


def _minsmooth_cell(cfg, cell):
    family, p, k = cell
    h = _hierarchy(cfg, family, p, k)
    m = min_smoothing_steps(h, cfg.smoother, cfg.m_max, cfg.tol, cfg.maxit)
    return [{"mesh": family, "p": p, "K": k, "smoother": cfg.smoother,
             "m_min": m if m is not None else f"none<={cfg.m_max}"}]


def run_min_smoothing(cfg):
    """Smallest number of post-smoothing steps giving convergence, per (mesh, p, K)."""
    cfg = replace(cfg, experiment="minsmooth").resolved()
    cells = [(f, p, k) for f in cfg.meshes for p, k in _level_pairs(cfg)]
    rows, errors = _run_cells(_minsmooth_cell, cfg, cells)
    return ExperimentResult("minsmooth", ["mesh", "p", "K", "smoother", "m_min"], rows, errors=errors)


def _lambda_cell(cfg, cell):
    family, p = cell
    args = _mesh_args(cfg, family)
    K = assemble_global(make_mesh(*args), p, None, cfg.mode, elements=_elements(*args, p)).K
    return [{"mesh": family, "p": p, "lambda": estimate_lambda(K, cfg.lambda_iters, cfg.seed)}]


def run_lambda_study(cfg):
    """Power-method estimate of the largest eigenvalue against p, with algebraic fit."""
    cfg = replace(cfg, experiment="lambda").resolved()
    cells = [(f, p) for f in cfg.meshes for p in range(cfg.p_min, cfg.p_max + 1)]
    rows, errors = _run_cells(_lambda_cell, cfg, cells)
    result = ExperimentResult("lambda", ["mesh", "p", "lambda"], rows, errors=errors)
    for family in cfg.meshes:
        sel = [r for r in rows if r["mesh"] == family]
        if len(sel) >= 2:
            result.fits[family] = fit_algebraic([r["p"] for r in sel], [r["lambda"] for r in sel])
    return result


def _count(rep, maxit):
    return rep.iterations if rep.converged else f"{maxit}+"


def _pcg_cell(cfg, cell):
    family, p = cell
    h = _hierarchy(cfg, family, p, p)
    K, f = h.finest.K, h.f
    m = cfg.m[0]
    row = {"mesh": family, "p": p, "m": m}
    row["iters_cg"] = _count(cg(K, f, tol=cfg.tol, maxit=cfg.maxit), cfg.maxit)
    pre = ic0(K)
    row["iters_pcg_ic0"] = _count(pcg(K, f, pre, tol=cfg.tol, maxit=cfg.maxit), cfg.maxit)
    row["ic0_shift"] = pre.info["shift"]
    for sm in ("richardson", "gs"):
        M = mg_preconditioner(h, m, sm, cfg.recursion)
        rep = pcg(K, f, M, tol=cfg.tol, maxit=cfg.maxit, flexible=cfg.flexible)
        row[f"iters_pcg_mg_{sm}"] = _count(rep, cfg.maxit)
        row[f"status_mg_{sm}"] = rep.status
    return [row]


def run_pcg_comparison(cfg):
    """CG, PCG-IC(0) and PCG with one multigrid cycle (both smoothers) per p."""
    cfg = replace(cfg, experiment="pcg").resolved()
    cells = [(f, p) for f in cfg.meshes for p in range(cfg.p_min, cfg.p_max + 1)]
    rows, errors = _run_cells(_pcg_cell, cfg, cells)
    cols = ["mesh", "p", "m", "iters_cg", "iters_pcg_ic0", "ic0_shift", "iters_pcg_mg_richardson",
            "status_mg_richardson", "iters_pcg_mg_gs", "status_mg_gs"]
    return ExperimentResult("pcg", cols, rows, errors=errors)


def manufactured_polynomial(p, seed=0):
    """Random polynomial ``u`` of total degree ``p`` and ``f = -lap u`` (vectorized)."""
    rng = np.random.default_rng(seed)
    terms = [(a, b, rng.standard_normal()) for d in range(p + 1) for b in range(d + 1)
             for a in (d - b,)]

    def u(x, y):
        return sum(c * x ** a * y ** b for a, b, c in terms) + 0.0 * x

    def f(x, y):
        out = 0.0 * x
        for a, b, c in terms:
            if a >= 2:
                out = out - c * a * (a - 1) * x ** (a - 2) * y ** b
            if b >= 2:
                out = out - c * b * (b - 1) * x ** a * y ** (b - 2)
        return out

    return u, f


def patch_error(mesh, p, mode="orthonormal", seed=0, elements=None):
    """Relative max-norm distance between the discrete solution and the interpolant of u in P_p."""
    from scipy.sparse.linalg import spsolve

    u, f = manufactured_polynomial(p, seed)
    if elements is None:
        elements = prepare_elements(mesh, p)
    sysp = assemble_global(mesh, p, f, mode, u, elements=elements)
    full = sysp.expand(spsolve(sysp.K.tocsc(), sysp.f))
    ref = interpolate(mesh, sysp.dof_map, u, mode, elements)
    return float(np.max(np.abs(full - ref)) / np.max(np.abs(ref)))


def _patch_cell(cfg, cell):
    family, p, mode = cell
    args = _mesh_args(cfg, family)
    err = patch_error(make_mesh(*args), p, mode, cfg.seed, _elements(*args, p))
    return [{"mesh": family, "p": p, "mode": mode, "rel_error": err,
             "status": "pass" if err <= cfg.tol else "fail"}]


def run_patchtest(cfg):
    """Polynomial reproduction check for every mesh family, degree and moment basis."""
    cfg = replace(cfg, experiment="patchtest").resolved()
    cells = [(f, p, mode) for f in cfg.meshes for p in range(cfg.p_min, cfg.p_max + 1)
             for mode in ("orthonormal", "monomial")]
    rows, errors = _run_cells(_patch_cell, cfg, cells)
    return ExperimentResult("patchtest", ["mesh", "p", "mode", "rel_error", "status"], rows,
                            errors=errors)


RUNNERS = {
    "table1": run_table1,
    "rho": run_rho_sweep,
    "minsmooth": run_min_smoothing,
    "lambda": run_lambda_study,
    "pcg": run_pcg_comparison,
    "patchtest": run_patchtest,
}


def run_experiment(cfg):
    return RUNNERS[cfg.experiment](cfg)
