"""Evaluation: primitive sampling, Chamfer distance, detection and topology scores.

Primitives are compared through dense deterministic samples.  Surfaces are
sampled at ``SURFACE_DENSITY`` points per unit area and curves at
``CURVE_DENSITY`` points per unit length; unbounded kinds are clipped to the
extent recorded with the primitive (or the unit box).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial import cKDTree

from .brep import BRepModel
from .core import MATCH_THRESHOLDS, parallel_map
from .errors import EmptyExtent, EmptyInput
from .primitives import Circle, Cone, Cylinder, Ellipse, Line, Plane, Sphere, Torus, orthonormal_basis

SURFACE_DENSITY = 10000.0
CURVE_DENSITY = 1000.0
MIN_SAMPLES = 16
# Above this many parametric samples the clipped projection sampler is used.
MAX_PARAMETRIC = 2_000_000
MAX_LATTICE = 4_000_000
MAX_REFINE = 4
CLASSES = ("vertex", "curve", "surface")
TOPO_THRESHOLD = 0.01
UNIT_BOX = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])


def _box(extent):
    if extent is None:
        return UNIT_BOX.copy()
    box = np.asarray(extent, dtype=float).reshape(2, 3)
    if not np.all(np.isfinite(box)) or np.any(box[1] < box[0]):
        raise EmptyExtent(f"invalid extent {box.tolist()}")
    return box


def _corners(box):
    return np.array([[box[i, 0], box[j, 1], box[k, 2]] for i in (0, 1) for j in (0, 1) for k in (0, 1)])


def _inside(pts, box, pad):
    return np.all((pts >= box[0] - pad) & (pts <= box[1] + pad), axis=1)


def _centered(lo, hi, step):
    """Cell-centred stratified values covering ``[lo, hi]``."""
    n = max(1, int(math.ceil((hi - lo) / step - 1e-9)))
    return lo + (np.arange(n) + 0.5) * (hi - lo) / n


def _arc_uniform(curve_at, n, dense=4096):
    """``n`` points spaced evenly by arc length along a closed parametric curve."""
    t = np.linspace(0.0, 2 * math.pi, max(dense, 4 * n) + 1)
    p = curve_at(t)
    seg = np.linalg.norm(np.diff(p, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    target = (np.arange(n) + 0.5) * s[-1] / n
    return curve_at(np.interp(target, s, t))


def _pad(box):
    return 1e-9 + 1e-6 * float(np.max(box[1] - box[0]))


def _grid2(origin, u, v, urange, vrange, step):
    a = _centered(urange[0], urange[1], step)
    b = _centered(vrange[0], vrange[1], step)
    A, B = np.meshgrid(a, b, indexing="ij")
    return origin + A.reshape(-1, 1) * u + B.reshape(-1, 1) * v


def _sample_plane(p: Plane, box, step):
    u, v = orthonormal_basis(p.normal)
    origin = p.offset * np.asarray(p.normal)
    c = _corners(box) - origin
    pts = _grid2(origin, u, v, ((c @ u).min(), (c @ u).max()), ((c @ v).min(), (c @ v).max()), step)
    return pts


def _angle_span(box, origin, axis, u, v):
    """Angular window of the box seen from an axis line; full turn if it contains it."""
    c = _corners(box) - origin
    flat = np.stack([c @ u, c @ v], axis=1)
    if _contains_origin_2d(flat):
        return 0.0, 2 * math.pi
    ang = np.arctan2(flat[:, 1], flat[:, 0])
    ang = np.sort(np.mod(ang, 2 * math.pi))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * math.pi]]))
    k = int(np.argmax(gaps))
    start = ang[(k + 1) % len(ang)]
    return start, start + 2 * math.pi - gaps[k]


def _contains_origin_2d(pts):
    from scipy.spatial import ConvexHull, QhullError

    try:
        hull = ConvexHull(pts)
    except (QhullError, ValueError):
        return False
    return bool(np.all(hull.equations[:, 2] <= 1e-12))


def _sample_cylinder(c: Cylinder, box, step):
    w = np.asarray(c.axis)
    u, v = orthonormal_basis(w)
    p0 = np.asarray(c.point)
    t = (_corners(box) - p0) @ w
    a0, a1 = _angle_span(box, p0, w, u, v)
    theta = _centered(a0, a1, step / c.radius)
    h = _centered(t.min(), t.max(), step)
    T, H = np.meshgrid(theta, h, indexing="ij")
    T, H = T.ravel(), H.ravel()
    return p0 + H[:, None] * w + c.radius * (np.cos(T)[:, None] * u + np.sin(T)[:, None] * v)


def _sample_cone(c: Cone, box, step):
    w = np.asarray(c.axis)
    u, v = orthonormal_basis(w)
    apex = np.asarray(c.apex)
    s, co = math.sin(c.half_angle), math.cos(c.half_angle)
    reach = float(np.max(np.linalg.norm(_corners(box) - apex, axis=1)))
    a0, a1 = _angle_span(box, apex, w, u, v)
    out = []
    for t in _centered(0.0, reach, step):
        rad = t * s
        n = max(3, int(math.ceil(rad * (a1 - a0) / step)))
        ang = a0 + (np.arange(n) + 0.5) * (a1 - a0) / n
        ring = apex + t * co * w + rad * (np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v)
        out.append(ring)
    return np.concatenate(out)


def _sample_sphere(sp: Sphere, density):
    n = max(MIN_SAMPLES, int(round(density * 4 * math.pi * sp.radius ** 2)))
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = math.pi * (3 - math.sqrt(5)) * i
    r = np.sqrt(1 - z * z)
    return np.asarray(sp.center) + sp.radius * np.stack([r * np.cos(phi), r * np.sin(phi), z], axis=1)


def _sample_torus(t: Torus, step):
    w = np.asarray(t.axis)
    u, v = orthonormal_basis(w)
    n_tube = max(4, int(math.ceil(2 * math.pi * t.minor / step)))
    out = []
    for phi in (np.arange(n_tube) + 0.5) * (2 * math.pi / n_tube):
        ring_r = t.major + t.minor * math.cos(phi)
        n = max(3, int(math.ceil(2 * math.pi * ring_r / step)))
        ang = (np.arange(n) + 0.5) * (2 * math.pi / n)
        radial = np.cos(ang)[:, None] * u + np.sin(ang)[:, None] * v
        out.append(np.asarray(t.center) + ring_r * radial + t.minor * math.sin(phi) * w)
    return np.concatenate(out)


def _surface_measure_estimate(prim, box):
    """Rough area used only to pick the sampler (parametric or projected)."""
    if isinstance(prim, Sphere):
        return 4 * math.pi * prim.radius ** 2
    if isinstance(prim, Torus):
        return 4 * math.pi ** 2 * prim.major * prim.minor
    if isinstance(prim, Cylinder):
        return 2 * math.pi * prim.radius * float(np.linalg.norm(box[1] - box[0]))
    return 0.0


def _projected_samples(prim, box, step):
    """Uniform fallback: project a lattice over the box onto the surface."""
    step = max(step, float(np.prod(np.maximum(box[1] - box[0], step))) ** (1 / 3) / MAX_LATTICE ** (1 / 3))
    axes = [_centered(box[0, k], box[1, k], step) if box[1, k] > box[0, k] else np.array([box[0, k]]) for k in range(3)]
    X, Y, Z = np.meshgrid(*axes, indexing="ij")
    q = np.stack([X.ravel(), Y.ravel(), Z.ravel()], axis=1)
    q = q[prim.distance(q) <= step]
    p = prim.project(q)
    key = np.floor(p / (0.5 * step)).astype(np.int64)
    _, first = np.unique(key, axis=0, return_index=True)
    return p[np.sort(first)]


def sample_primitive(prim, density: float, extent=None) -> np.ndarray:
    """Deterministic quasi-uniform samples of ``prim``.

    ``density`` is points per unit area (surfaces) or length (curves).
    Unbounded kinds are clipped to ``extent`` (``[[xmin, ymin, zmin],
    [xmax, ymax, zmax]]``) or the unit box; bounded kinds are sampled whole and
    then clipped to ``extent`` when one is given.  Fewer than 16 surviving
    samples trigger a finer grid.
    """
    if not density > 0:
        raise EmptyExtent(f"sampling density must be positive, got {density}")
    box = _box(extent)
    clip = extent is not None or isinstance(prim, (Plane, Cylinder, Cone, Line))
    pad = _pad(box)
    for refine in range(MAX_REFINE):
        dens = density * (4.0 ** refine if prim.is_surface else 2.0 ** refine)
        pts = _sample_once(prim, dens, box)
        if clip:
            pts = pts[_inside(pts, box, pad)]
        if len(pts) == 0 and refine == 0:
            raise EmptyExtent(f"{prim.kind} does not meet its extent {box.tolist()}")
        if len(pts) >= MIN_SAMPLES:
            break
    return pts


def _sample_once(prim, density, box):
    if prim.is_surface:
        step = 1.0 / math.sqrt(density)
        if _surface_measure_estimate(prim, box) * density > MAX_PARAMETRIC:
            return _projected_samples(prim, box, step)
        if isinstance(prim, Plane):
            return _sample_plane(prim, box, step)
        if isinstance(prim, Sphere):
            return _sample_sphere(prim, density)
        if isinstance(prim, Cylinder):
            return _sample_cylinder(prim, box, step)
        if isinstance(prim, Cone):
            return _sample_cone(prim, box, step)
        if isinstance(prim, Torus):
            return _sample_torus(prim, step)
    else:
        step = 1.0 / density
        if isinstance(prim, Line):
            t = (_corners(box) - np.asarray(prim.point)) @ np.asarray(prim.direction)
            return prim.at(_centered(t.min(), t.max(), step))
        if isinstance(prim, Circle):
            n = max(MIN_SAMPLES, int(round(density * 2 * math.pi * prim.radius)))
            return prim.at((np.arange(n) + 0.5) * (2 * math.pi / n))
        if isinstance(prim, Ellipse):
            a, b = prim.a, prim.b
            h = ((a - b) / (a + b)) ** 2
            perimeter = math.pi * (a + b) * (1 + 3 * h / (10 + math.sqrt(4 - 3 * h)))
            n = max(MIN_SAMPLES, int(round(density * perimeter)))
            return _arc_uniform(prim.at, n)
    raise TypeError(f"cannot sample {type(prim).__name__}")


def chamfer(A, B) -> float:
    """Symmetric mean of unsquared nearest-neighbour distances."""
    A = np.asarray(A, dtype=float).reshape(-1, 3)
    B = np.asarray(B, dtype=float).reshape(-1, 3)
    if len(A) == 0 or len(B) == 0:
        raise EmptyInput("chamfer distance needs two non-empty point sets")
    ab = float(cKDTree(B).query(A)[0].mean())
    ba = float(cKDTree(A).query(B)[0].mean())
    return 0.5 * (ab + ba)


def model_samples(model: BRepModel, surface_density=SURFACE_DENSITY, curve_density=CURVE_DENSITY) -> dict:
    """Per-class sample arrays for every primitive of ``model``."""
    return {
        "vertex": [v[None, :].copy() for v in model.vertices],
        "curve": [sample_primitive(c, curve_density, model.extent_of("curve", i)) for i, c in enumerate(model.curves)],
        "surface": [
            sample_primitive(s, surface_density, model.extent_of("surface", i)) for i, s in enumerate(model.surfaces)
        ],
    }


def cost_matrix(pred: list, gt: list, threads: int = 1) -> np.ndarray:
    """Chamfer distance between every predicted and ground-truth sample set."""
    C = np.zeros((len(pred), len(gt)))
    if len(pred) == 0 or len(gt) == 0:
        return C
    gt_trees = [cKDTree(g) for g in gt]
    pred_trees = [cKDTree(p) for p in pred]

    def row(i):
        out = np.empty(len(gt))
        for j, g in enumerate(gt):
            ab = float(gt_trees[j].query(pred[i])[0].mean())
            ba = float(pred_trees[i].query(g)[0].mean())
            out[j] = 0.5 * (ab + ba)
        return out

    return np.array(parallel_map(row, list(range(len(pred))), threads))


def match_at(C: np.ndarray, t: float) -> list:
    """One-to-one matching with the most pairs below ``t``, then least total cost.

    Pairs at or above the threshold are priced out so that the assignment
    maximizes the number of accepted pairs before minimizing their summed
    distance.  Returns sorted ``(pred, gt)`` index pairs.
    """
    if C.size == 0:
        return []
    ok = C < t
    if not ok.any():
        return []
    big = min(C.shape) * t + 1.0
    rows, cols = linear_sum_assignment(np.where(ok, C, big))
    return sorted((int(i), int(j)) for i, j in zip(rows, cols) if ok[i, j])


def greedy_match(C: np.ndarray, t: float) -> list:
    """Repeatedly take the cheapest remaining pair below ``t``."""
    pairs = []
    if C.size == 0:
        return pairs
    used_r, used_c = set(), set()
    order = np.argsort(C, axis=None, kind="stable")
    for flat in order:
        i, j = np.unravel_index(flat, C.shape)
        if C[i, j] >= t:
            break
        if i in used_r or j in used_c:
            continue
        used_r.add(int(i))
        used_c.add(int(j))
        pairs.append((int(i), int(j)))
    return sorted(pairs)


def _f1(p, r):
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


@dataclass
class ClassScore:
    precision: float
    recall: float
    f1: float
    matched: list = field(default_factory=list)
    good_count: float = 0
    total_count: float = 0

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "matched": [list(p) for p in self.matched],
            "good_count": self.good_count,
            "total_count": self.total_count,
        }


def score_class(n_pred: int, n_gt: int, pairs: list) -> ClassScore:
    """Precision/recall of a matching.  Two empty lists agree perfectly."""
    if n_pred == 0 and n_gt == 0:
        return ClassScore(1.0, 1.0, 1.0, [], 0, 0)
    p = len(pairs) / n_pred if n_pred else 0.0
    r = len(pairs) / n_gt if n_gt else 0.0
    return ClassScore(p, r, _f1(p, r), list(pairs), len(pairs), n_pred)


@dataclass
class DetectionReport:
    """Per-class scores at one threshold (``threshold`` None for the average)."""

    threshold: float
    classes: dict

    def __getitem__(self, cls) -> ClassScore:
        return self.classes[cls]

    def to_dict(self) -> dict:
        return {"threshold": self.threshold, "classes": {k: v.to_dict() for k, v in self.classes.items()}}


def detection_scores(pred: dict, gt: dict, thresholds=MATCH_THRESHOLDS, threads: int = 1):
    """Match primitives class by class and score them at every threshold.

    ``pred`` and ``gt`` map class names to lists of sample arrays (see
    ``model_samples``).  Returns ``(reports, average, costs)``: one
    ``DetectionReport`` per threshold, their mean, and the per-class Chamfer
    cost matrices.  The average carries matched pairs and good/total counts
    from the 0.01 threshold when it is among ``thresholds``.
    """
    costs = {c: cost_matrix(pred.get(c, []), gt.get(c, []), threads) for c in CLASSES}
    reports = []
    for t in thresholds:
        classes = {}
        for c in CLASSES:
            pairs = match_at(costs[c], t)
            classes[c] = score_class(len(pred.get(c, [])), len(gt.get(c, [])), pairs)
        reports.append(DetectionReport(float(t), classes))
    avg = {}
    ref = next((r for r in reports if r.threshold == TOPO_THRESHOLD), reports[len(reports) // 2])
    for c in CLASSES:
        p = float(np.mean([r[c].precision for r in reports]))
        rc = float(np.mean([r[c].recall for r in reports]))
        f = float(np.mean([r[c].f1 for r in reports]))
        avg[c] = ClassScore(p, rc, f, ref[c].matched, ref[c].good_count, ref[c].total_count)
    return reports, DetectionReport(None, avg), costs


def _pair_f1(pred_m, gt_m, row_map, col_map):
    """F1 of a boolean incidence matrix after mapping predicted ids to GT ids."""
    pred_ones = np.argwhere(pred_m)
    n_gt = int(gt_m.sum())
    if len(pred_ones) == 0 and n_gt == 0:
        return 1.0, 1.0, 1.0
    tp = 0
    for i, j in pred_ones:
        gi, gj = row_map.get(int(i)), col_map.get(int(j))
        if gi is not None and gj is not None and gt_m[gi, gj]:
            tp += 1
    p = tp / len(pred_ones) if len(pred_ones) else 0.0
    r = tp / n_gt if n_gt else 0.0
    return p, r, _f1(p, r)


def topo_f1(pred: BRepModel, gt: BRepModel, matchings: dict) -> dict:
    """FE and EV F1 under the class matchings (pred index -> GT index pairs).

    A predicted incidence is a true positive when both its endpoints are
    matched and the GT entry between their partners is set.  Precision counts
    every predicted incidence and recall every GT incidence, so unmatched
    primitives cost both.
    """
    maps = {c: dict(matchings.get(c, [])) for c in CLASSES}
    fe = _pair_f1(pred.FE, gt.FE, maps["surface"], maps["curve"])
    ev = _pair_f1(pred.EV, gt.EV, maps["curve"], maps["vertex"])
    return {
        "FE": {"precision": fe[0], "recall": fe[1], "f1": fe[2]},
        "EV": {"precision": ev[0], "recall": ev[1], "f1": ev[2]},
    }


def class_chamfer(pred: dict, gt: dict) -> dict:
    """Chamfer distance between the pooled samples of each class (None if either is empty)."""
    out = {}
    for c in CLASSES:
        a, b = pred.get(c, []), gt.get(c, [])
        out[c] = chamfer(np.concatenate(a), np.concatenate(b)) if a and b else None
    return out


def evaluate(pred: BRepModel, gt: BRepModel, thresholds=MATCH_THRESHOLDS, threads: int = 1) -> dict:
    """Full comparison of two models as a JSON-ready dict."""
    ps, gs = model_samples(pred), model_samples(gt)
    reports, avg, _ = detection_scores(ps, gs, thresholds, threads)
    if TOPO_THRESHOLD in [r.threshold for r in reports]:
        ref = next(r for r in reports if r.threshold == TOPO_THRESHOLD)
    else:
        ref = detection_scores(ps, gs, (TOPO_THRESHOLD,), threads)[0][0]
    matchings = {c: ref[c].matched for c in CLASSES}
    return {
        "chamfer": class_chamfer(ps, gs),
        "detection": [r.to_dict() for r in reports],
        "average": avg.to_dict(),
        "topology": topo_f1(pred, gt, matchings),
        "counts": {"pred": list(pred.counts), "gt": list(gt.counts)},
    }
