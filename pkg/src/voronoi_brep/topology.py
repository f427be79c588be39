"""Topology recovery: which fitted surfaces meet, the curves where they meet,
and the vertices where those curves meet.

Curves come from intersecting adjacent surfaces (sampled numerically by
alternating projection, then fitted with the curve kinds) and from cells
whose points were themselves fitted as a curve.  Vertices come from
intersecting adjacent curves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .brep import BRepModel
from .core import Config, parallel_map
from .errors import AllKindsFailed, NoIntersection
from .fitting import fit_best_curve

INTERSECTION_TOL = 1e-5
MAX_PROJECTION_ROUNDS = 50
CURVE_ACCEPT_FACTOR = 10.0


@dataclass(eq=False)
class SurfaceEntry:
    primitive: object
    points: np.ndarray = field(repr=False)
    cell: int
    rms: float
    source: str = "cell"


@dataclass(eq=False)
class CurveEntry:
    primitive: object
    support: np.ndarray = field(repr=False)
    parents: frozenset
    rms: float
    source: str = "intersection"
    cell: int = -1

    def sort_key(self, n_surfaces):
        return (min(self.parents) if self.parents else n_surfaces, self.rms)


@dataclass(eq=False)
class IntersectionSamples:
    """Points on both surfaces, with their residual distance to each."""

    points: np.ndarray
    residual_i: np.ndarray
    residual_j: np.ndarray

    def __len__(self):
        return len(self.points)


def collect_primitives(cell_fits, cell_points):
    """Surfaces (cell order, RANSAC members in order) and curves fitted from curve cells."""
    surfaces, curves = [], []
    for cell, fit in enumerate(cell_fits):
        pts = cell_points.points[cell]
        if fit.variant == "surface":
            f = fit.fits[0]
            surfaces.append(SurfaceEntry(f.primitive, pts, cell, f.rms_error, "cell"))
        elif fit.variant == "multi":
            for f in fit.fits:
                sub = pts[f.inliers] if f.inliers is not None else pts
                surfaces.append(SurfaceEntry(f.primitive, sub, cell, f.rms_error, "ransac"))
        elif fit.variant == "curve":
            f = fit.fits[0]
            curves.append(CurveEntry(f.primitive, pts, frozenset(), f.rms_error, "cell", cell))
    return surfaces, curves


def _min_distance(a, b) -> float:
    if len(a) == 0 or len(b) == 0:
        return np.inf
    if len(a) > len(b):
        a, b = b, a
    d, _ = cKDTree(b).query(a, k=1)
    return float(d.min())


def _near_cells(cell_adjacency, cell_fits):
    """Cell pairs that touch, directly or through one cell carrying no surface."""
    adj = np.asarray(cell_adjacency, dtype=bool)
    n = len(adj)
    no_surface = np.array([f.variant in ("curve", "degenerate") for f in cell_fits], dtype=bool)
    bridge = adj[:, no_surface].astype(np.int64)
    via = (bridge @ bridge.T) > 0
    near = adj | via | np.eye(n, dtype=bool)
    return near


def build_surface_adjacency(surfaces, cell_adjacency, cell_fits, eps2: float, threads: int = 1) -> np.ndarray:
    """FF: cells touch (possibly through a curve/degenerate cell) and point sets come within eps2."""
    n = len(surfaces)
    FF = np.zeros((n, n), dtype=bool)
    if n < 2:
        return FF
    near = _near_cells(cell_adjacency, cell_fits)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if near[surfaces[i].cell, surfaces[j].cell]]
    close = parallel_map(lambda ij: _min_distance(surfaces[ij[0]].points, surfaces[ij[1]].points) < eps2, pairs, threads)
    for (i, j), ok in zip(pairs, close):
        FF[i, j] = FF[j, i] = ok
    return FF


def common_points(si: SurfaceEntry, sj: SurfaceEntry, eps2: float) -> np.ndarray:
    """Points of either set lying within eps2 of the other surface."""
    a = si.points[sj.primitive.distance(si.points) < eps2] if len(si.points) else np.zeros((0, 3))
    b = sj.points[si.primitive.distance(sj.points) < eps2] if len(sj.points) else np.zeros((0, 3))
    return np.concatenate([a, b]).reshape(-1, 3)


def intersect_surfaces(fi, fj, seeds, tol: float = INTERSECTION_TOL, max_rounds: int = MAX_PROJECTION_ROUNDS) -> IntersectionSamples:
    """Project seeds alternately onto both surfaces until they sit on both."""
    x = np.asarray(seeds, dtype=float).reshape(-1, 3)
    if len(x) == 0:
        raise NoIntersection("no seed points")
    done = np.zeros(len(x), dtype=bool)
    for _ in range(max_rounds):
        active = ~done
        if not active.any():
            break
        y = fj.project(fi.project(x[active]))
        x[active] = y
        ri, rj = fi.distance(y), fj.distance(y)
        idx = np.flatnonzero(active)
        done[idx[(ri < tol) & (rj < tol)]] = True
    ri, rj = fi.distance(x), fj.distance(x)
    ok = done & (ri < tol) & (rj < tol) & np.all(np.isfinite(x), axis=1)
    if not ok.any():
        raise NoIntersection("alternating projection did not converge from any seed")
    return IntersectionSamples(x[ok], ri[ok], rj[ok])


def _dedup_points(pts, tol=1e-9):
    if len(pts) == 0:
        return pts
    return np.unique(np.round(pts / tol) * tol, axis=0)


def _sampled_hausdorff(a: CurveEntry, b: CurveEntry) -> float:
    da = b.primitive.distance(a.support).max() if len(a.support) else np.inf
    db = a.primitive.distance(b.support).max() if len(b.support) else np.inf
    return float(max(da, db))


def _intersection_curve(pair, surfaces, eps1, eps2):
    i, j = pair
    si, sj = surfaces[i], surfaces[j]
    seeds = common_points(si, sj, eps2)
    if len(seeds) == 0:
        return None
    try:
        samples = intersect_surfaces(si.primitive, sj.primitive, seeds)
    except NoIntersection:
        return None
    pts = _dedup_points(samples.points)
    try:
        fit = fit_best_curve(pts)
    except AllKindsFailed:
        return None
    if not fit.rms_error < CURVE_ACCEPT_FACTOR * eps1:
        return None
    return CurveEntry(fit.primitive, pts, frozenset((i, j)), fit.rms_error, "intersection")


def deduplicate_curves(curves, n_surfaces: int, eps3: float) -> list:
    """Merge curves closer than eps3/2 (sampled Hausdorff); lower rms wins, parents are unioned."""
    kept = []
    for c in sorted(curves, key=lambda c: c.sort_key(n_surfaces)):
        for k, other in enumerate(kept):
            if _sampled_hausdorff(c, other) < eps3 / 2:
                winner = c if c.rms < other.rms else other
                kept[k] = CurveEntry(
                    winner.primitive,
                    np.concatenate([other.support, c.support]),
                    other.parents | c.parents,
                    winner.rms,
                    winner.source,
                    winner.cell,
                )
                break
        else:
            kept.append(c)
    return sorted(kept, key=lambda c: c.sort_key(n_surfaces))


def extract_curves(surfaces, FF, eps1: float, eps2: float, eps3: float, cell_curves=(), cell_adjacency=None, threads: int = 1):
    """Curves between adjacent surfaces plus curve-cell curves, deduplicated; returns (curves, FE)."""
    n = len(surfaces)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n) if FF[i, j]]
    found = parallel_map(lambda p: _intersection_curve(p, surfaces, eps1, eps2), pairs, threads)
    curves = [c for c in found if c is not None]
    for c in cell_curves:
        parents = frozenset()
        if cell_adjacency is not None:
            parents = frozenset(k for k, s in enumerate(surfaces) if cell_adjacency[c.cell, s.cell])
        curves.append(CurveEntry(c.primitive, c.support, parents, c.rms, c.source, c.cell))
    curves = deduplicate_curves(curves, n, eps3)
    FE = np.zeros((n, len(curves)), dtype=bool)
    for e, c in enumerate(curves):
        for k in c.parents:
            FE[k, e] = True
    return curves, FE


def build_curve_adjacency(curves, FE, eps3: float, threads: int = 1) -> np.ndarray:
    """EE: curves share a surface and their supports come within eps3."""
    m = len(curves)
    EE = np.zeros((m, m), dtype=bool)
    if m < 2:
        return EE
    share = (FE.T.astype(np.int64) @ FE.astype(np.int64)) > 0
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m) if share[i, j]]
    close = parallel_map(lambda ij: _min_distance(curves[ij[0]].support, curves[ij[1]].support) < eps3, pairs, threads)
    for (i, j), ok in zip(pairs, close):
        EE[i, j] = EE[j, i] = ok
    return EE


def _line_line(a, b):
    """Closest points of two lines, or None when (nearly) parallel."""
    p, u = np.asarray(a.point), np.asarray(a.direction)
    q, v = np.asarray(b.point), np.asarray(b.direction)
    w0 = p - q
    uv = u @ v
    denom = 1.0 - uv * uv
    if denom < 1e-12:
        return None
    s = (uv * (v @ w0) - (u @ w0)) / denom
    t = ((v @ w0) - uv * (u @ w0)) / denom
    return p + s * u, q + t * v


def _curve_closest(a, b, seeds, rounds=MAX_PROJECTION_ROUNDS):
    x = np.asarray(seeds, dtype=float).reshape(-1, 3)
    for _ in range(rounds):
        y = b.primitive.project(a.primitive.project(x))
        if np.allclose(y, x, atol=1e-12, rtol=0):
            x = y
            break
        x = y
    return a.primitive.project(x), b.primitive.project(x)


def _vertex_candidate(a: CurveEntry, b: CurveEntry, eps3: float):
    if a.primitive.kind == "line" and b.primitive.kind == "line":
        res = _line_line(a.primitive, b.primitive)
        candidates = [] if res is None else [res]
    else:
        if len(a.support) == 0 or len(b.support) == 0:
            return None
        d, idx = cKDTree(b.support).query(a.support, k=1)
        order = np.argsort(d, kind="stable")[:8]
        seeds = 0.5 * (a.support[order] + b.support[idx[order]])
        pa, pb = _curve_closest(a, b, seeds)
        candidates = list(zip(pa, pb))
    best, best_score = None, np.inf
    for pa, pb in candidates:
        if not np.linalg.norm(pa - pb) < eps3:
            continue
        v = 0.5 * (pa + pb)
        score = _min_distance(v[None, :], a.support) + _min_distance(v[None, :], b.support)
        if score < best_score:
            best, best_score = v, score
    if best is None or not best_score < 2 * eps3:
        return None
    return best


def extract_vertices(curves, EE, FE, eps3: float, threads: int = 1):
    """Vertices where adjacent curves meet; returns (V, EV, FV)."""
    m = len(curves)
    pairs = [(i, j) for i in range(m) for j in range(i + 1, m) if EE[i, j]]
    found = parallel_map(lambda p: _vertex_candidate(curves[p[0]], curves[p[1]], eps3), pairs, threads)
    clusters = []  # [position sum, count, set of curves]
    for (i, j), v in zip(pairs, found):
        if v is None:
            continue
        for cl in clusters:
            if np.linalg.norm(cl[0] / cl[1] - v) < eps3 / 2:
                cl[0] = cl[0] + v
                cl[1] += 1
                cl[2].update((i, j))
                break
        else:
            clusters.append([v.copy(), 1, {i, j}])
    verts = [(min(cl[2]), tuple(cl[0] / cl[1]), cl[2]) for cl in clusters]
    verts.sort(key=lambda t: (t[0], t[1]))
    V = np.array([t[1] for t in verts], dtype=float).reshape(-1, 3)
    EV = np.zeros((m, len(V)), dtype=bool)
    for k, (_, _, members) in enumerate(verts):
        EV[sorted(members), k] = True
    FV = (FE.astype(np.int64) @ EV.astype(np.int64)) > 0
    return V, EV, FV


def _extent(pts):
    if len(pts) == 0:
        return None
    return [pts.min(axis=0).tolist(), pts.max(axis=0).tolist()]


def _entry_meta(entry, pts):
    return {"rms": float(entry.rms), "cell": int(entry.cell), "source": entry.source, "extent": _extent(pts)}


def _build_model(V, curves, surfaces, FF, FE, EE, EV, FV) -> BRepModel:
    return BRepModel(
        V,
        [c.primitive if isinstance(c, CurveEntry) else c for c in curves],
        [s.primitive if isinstance(s, SurfaceEntry) else s for s in surfaces],
        FF, FE, EE, EV, FV,
        surface_meta=[_entry_meta(s, s.points) if isinstance(s, SurfaceEntry) else {} for s in surfaces],
        curve_meta=[_entry_meta(c, c.support) if isinstance(c, CurveEntry) else {} for c in curves],
    )


def assemble_brep(V, curves, surfaces, FF, FE, EE, EV, FV, eps3: float = None) -> BRepModel:
    """Validated model; raises InconsistentTopology listing every violation."""
    return _build_model(V, curves, surfaces, FF, FE, EE, EV, FV).validate(eps3)


def reconstruct_topology(cells, cell_fits, cell_points, cfg: Config):
    """Run surface adjacency, curve and vertex extraction; returns ``(model, violations)``.

    On violations the unvalidated model is still returned, carrying the
    warning list, so callers can write it.
    """
    surfaces, cell_curves = collect_primitives(cell_fits, cell_points)
    FF = build_surface_adjacency(surfaces, cells.adjacency, cell_fits, cfg.eps2, cfg.threads)
    curves, FE = extract_curves(surfaces, FF, cfg.eps1, cfg.eps2, cfg.eps3, cell_curves, cells.adjacency, cfg.threads)
    EE = build_curve_adjacency(curves, FE, cfg.eps3, cfg.threads)
    V, EV, FV = extract_vertices(curves, EE, FE, cfg.eps3, cfg.threads)
    model = _build_model(V, curves, surfaces, FF, FE, EE, EV, FV)
    problems = model.violations(cfg.eps3)
    model.warnings = list(problems)
    return model, list(problems)
