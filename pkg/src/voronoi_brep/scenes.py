"""Synthetic CAD-like scenes with exact primitive samples and hand-built B-Reps.

Each scene lists its primitives (surfaces, curves, then vertices) together
with dense samples of the *bounded* piece that belongs to the shape; the
samples drive ground-truth labeling and UDF construction, the B-Rep is the
reference for end-to-end evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .brep import BRepModel
from .primitives import Circle, Cone, Cylinder, Line, Plane, Sphere

SAMPLE_STEP = 0.004


@dataclass(eq=False)
class Scene:
    name: str
    primitives: list
    samples: list = field(repr=False)
    gt: BRepModel = field(repr=False)

    @property
    def points(self) -> np.ndarray:
        return np.concatenate(self.samples)

    def surface_points(self) -> np.ndarray:
        """Samples of the surfaces only (the typical input point cloud)."""
        return np.concatenate([s for p, s in zip(self.primitives, self.samples) if p is not None and p.is_surface])


def _count(length, step):
    return max(2, int(math.ceil(length / step)))


def _open_range(lo, hi, step):
    """Evenly spaced values strictly inside ``(lo, hi)``."""
    n = _count(hi - lo, step)
    return lo + (np.arange(n) + 0.5) * (hi - lo) / n


def _closed_range(lo, hi, step):
    return np.linspace(lo, hi, _count(hi - lo, step) + 1)


def _rect(origin, u, v, su, sv, step, closed=False):
    rng = _closed_range if closed else _open_range
    a = rng(0.0, su, step)
    b = rng(0.0, sv, step)
    A, B = np.meshgrid(a, b, indexing="ij")
    return np.asarray(origin) + A.reshape(-1, 1) * np.asarray(u) + B.reshape(-1, 1) * np.asarray(v)


def _disk(center, radius, z, step):
    """Grid points strictly inside a horizontal disk."""
    a = _open_range(-radius, radius, step)
    X, Y = np.meshgrid(a, a, indexing="ij")
    keep = X ** 2 + Y ** 2 < (radius - 0.25 * step) ** 2
    pts = np.stack([X[keep] + center[0], Y[keep] + center[1], np.full(keep.sum(), z)], axis=1)
    return pts


def _circle_pts(center, radius, z, step):
    n = _count(2 * math.pi * radius, step)
    t = np.arange(n) * (2 * math.pi / n)
    return np.stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t), np.full(n, z)], axis=1)


def _cylinder_side(center, radius, z0, z1, step):
    n = _count(2 * math.pi * radius, step)
    t = np.arange(n) * (2 * math.pi / n)
    z = _open_range(z0, z1, step)
    T, Z = np.meshgrid(t, z, indexing="ij")
    T, Z = T.ravel(), Z.ravel()
    return np.stack([center[0] + radius * np.cos(T), center[1] + radius * np.sin(T), Z], axis=1)


def _fibonacci_sphere(center, radius, step):
    n = max(16, int(math.ceil(4 * math.pi * radius ** 2 / step ** 2)))
    i = np.arange(n) + 0.5
    z = 1 - 2 * i / n
    phi = math.pi * (3 - math.sqrt(5)) * i
    s = np.sqrt(1 - z * z)
    return np.asarray(center) + radius * np.stack([s * np.cos(phi), s * np.sin(phi), z], axis=1)


def _cone_side(apex, half_angle, height, step):
    """Points on a downward-opening cone between apex (excluded) and ``height``."""
    tan = math.tan(half_angle)
    slant = height / math.cos(half_angle)
    out = []
    for t in _open_range(0.0, slant, step):
        h = t * math.cos(half_angle)
        rad = h * tan
        n = max(3, _count(2 * math.pi * rad, step))
        a = np.arange(n) * (2 * math.pi / n)
        out.append(np.stack([apex[0] + rad * np.cos(a), apex[1] + rad * np.sin(a), np.full(n, apex[2] - h)], axis=1))
    return np.concatenate(out)


def _extent(pts):
    return [pts.min(axis=0).tolist(), pts.max(axis=0).tolist()]


def _model(surfaces, surf_pts, curves, curve_pts, vertices, FE, EV, eps3=0.05):
    FE = np.asarray(FE, dtype=bool).reshape(len(surfaces), len(curves))
    EV = np.asarray(EV, dtype=bool).reshape(len(curves), len(vertices))
    FF = (FE.astype(int) @ FE.T.astype(int)) > 0
    np.fill_diagonal(FF, False)
    EE = ((FE.T.astype(int) @ FE.astype(int)) > 0) & ((EV.astype(int) @ EV.T.astype(int)) > 0)
    np.fill_diagonal(EE, False)
    FV = (FE.astype(int) @ EV.astype(int)) > 0
    model = BRepModel(
        np.asarray(vertices, dtype=float).reshape(-1, 3),
        curves,
        surfaces,
        FF,
        FE,
        EE,
        EV,
        FV,
        surface_meta=[{"extent": _extent(p), "source": "ground-truth"} for p in surf_pts],
        curve_meta=[{"extent": _extent(p), "source": "ground-truth"} for p in curve_pts],
    )
    return model.validate(eps3)


def two_planes(step=SAMPLE_STEP) -> Scene:
    planes = [Plane((0, 0, 1), 0.25), Plane((0, 0, 1), 0.75)]
    pts = [_rect((0, 0, z), (1, 0, 0), (0, 1, 0), 1.0, 1.0, step, closed=True) for z in (0.25, 0.75)]
    gt = _model(planes, pts, [], [], np.zeros((0, 3)), np.zeros((2, 0)), np.zeros((0, 0)))
    return Scene("two_planes", planes, pts, gt)


CUBE_LO, CUBE_HI = 0.25, 0.75


def cube(step=SAMPLE_STEP) -> Scene:
    """Axis-aligned cube ``[0.25, 0.75]^3``: 6 faces, 12 edges, 8 corners."""
    lo, hi = CUBE_LO, CUBE_HI
    size = hi - lo
    faces, face_pts, face_axes = [], [], []
    for axis in range(3):
        for side in (lo, hi):
            n = np.zeros(3)
            n[axis] = 1.0
            u_ax, v_ax = [a for a in range(3) if a != axis]
            origin = np.full(3, lo)
            origin[axis] = side
            u = np.eye(3)[u_ax]
            v = np.eye(3)[v_ax]
            faces.append(Plane(tuple(n), side))
            face_pts.append(_rect(origin, u, v, size, size, step))
            face_axes.append((axis, side))
    corners = np.array([[x, y, z] for z in (lo, hi) for y in (lo, hi) for x in (lo, hi)], dtype=float)
    edges, edge_pts, edge_ends = [], [], []
    for axis in range(3):
        others = [a for a in range(3) if a != axis]
        for s0 in (lo, hi):
            for s1 in (lo, hi):
                p = np.zeros(3)
                p[others[0]], p[others[1]] = s0, s1
                p[axis] = lo
                d = np.eye(3)[axis]
                edges.append(Line(tuple(p), tuple(d)).canonical())
                edge_pts.append(p + _open_range(0.0, size, step)[:, None] * d)
                a_end = p.copy()
                b_end = p + size * d
                ends = [int(np.argmin(np.linalg.norm(corners - q, axis=1))) for q in (a_end, b_end)]
                edge_ends.append((axis, {others[0]: s0, others[1]: s1}, ends))
    FE = np.zeros((6, 12), dtype=bool)
    EV = np.zeros((12, 8), dtype=bool)
    for e, (axis, fixed, ends) in enumerate(edge_ends):
        for f, (faxis, side) in enumerate(face_axes):
            if faxis in fixed and fixed[faxis] == side:
                FE[f, e] = True
        EV[e, ends] = True
    prims = faces + edges + [None] * 8
    samples = face_pts + edge_pts + [c[None, :] for c in corners]
    gt = _model(faces, face_pts, edges, edge_pts, corners, FE, EV)
    return Scene("cube", prims, samples, gt)


CYL_CENTER = (0.5, 0.5)
CYL_RADIUS = 0.2
CYL_Z = (0.2, 0.8)


def capped_cylinder(step=SAMPLE_STEP) -> Scene:
    """Cylinder r=0.2, height 0.6 along z through (0.5, 0.5), closed by two disks."""
    (cx, cy), r = CYL_CENTER, CYL_RADIUS
    z0, z1 = CYL_Z
    side = Cylinder((cx, cy, 0.0), (0, 0, 1), r).canonical()
    caps = [Plane((0, 0, 1), z0), Plane((0, 0, 1), z1)]
    rims = [Circle((cx, cy, z0), (0, 0, 1), r), Circle((cx, cy, z1), (0, 0, 1), r)]
    surf_pts = [_cylinder_side((cx, cy), r, z0, z1, step), _disk((cx, cy), r, z0, step), _disk((cx, cy), r, z1, step)]
    rim_pts = [_circle_pts((cx, cy), r, z, step) for z in (z0, z1)]
    FE = [[1, 1], [1, 0], [0, 1]]
    gt = _model([side] + caps, surf_pts, rims, rim_pts, np.zeros((0, 3)), FE, np.zeros((2, 0)))
    return Scene("capped_cylinder", [side] + caps + rims, surf_pts + rim_pts, gt)


def sphere_plane(step=SAMPLE_STEP) -> Scene:
    sph = Sphere((0.5, 0.5, 0.2), 0.15)
    pl = Plane((0, 0, 1), 0.5)
    pts = [_fibonacci_sphere(sph.center, sph.radius, step), _rect((0, 0, 0.5), (1, 0, 0), (0, 1, 0), 1.0, 1.0, step, closed=True)]
    gt = _model([sph, pl], pts, [], [], np.zeros((0, 3)), np.zeros((2, 0)), np.zeros((0, 0)))
    return Scene("sphere_plane", [sph, pl], pts, gt)


CONE_APEX = (0.5, 0.5, 0.75)
CONE_HALF_ANGLE = math.radians(30.0)
CONE_BASE_Z = 0.3


def cone_plane(step=SAMPLE_STEP) -> Scene:
    """Downward-opening 30-degree cone closed by a disk at z=0.3."""
    apex = np.asarray(CONE_APEX)
    height = apex[2] - CONE_BASE_Z
    base_r = height * math.tan(CONE_HALF_ANGLE)
    cone = Cone(tuple(apex), (0, 0, -1), CONE_HALF_ANGLE)
    base = Plane((0, 0, 1), CONE_BASE_Z)
    rim = Circle((apex[0], apex[1], CONE_BASE_Z), (0, 0, 1), base_r)
    surf_pts = [_cone_side(apex, CONE_HALF_ANGLE, height, step), _disk(apex[:2], base_r, CONE_BASE_Z, step)]
    rim_pts = [_circle_pts(apex[:2], base_r, CONE_BASE_Z, step)]
    gt = _model([cone, base], surf_pts, [rim], rim_pts, np.zeros((0, 3)), [[1], [1]], np.zeros((1, 0)))
    return Scene("cone_plane", [cone, base, rim], surf_pts + rim_pts, gt)


SCENES = {
    "two_planes": two_planes,
    "cube": cube,
    "capped_cylinder": capped_cylinder,
    "sphere_plane": sphere_plane,
    "cone_plane": cone_plane,
}


def make_scene(name: str, step=SAMPLE_STEP) -> Scene:
    try:
        return SCENES[name](step)
    except KeyError:
        raise ValueError(f"unknown scene {name!r}; choose from {sorted(SCENES)}") from None


def add_noise(points, sigma: float, seed: int = 0) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.asarray(points, dtype=float) + rng.normal(scale=sigma, size=np.shape(points))
