"""Least-squares primitive fitting and the per-cell fitting policy.

Closed-form fits (plane, line, sphere initialization, circle and ellipse in
their best plane) are refined, where the model is nonlinear, by
Levenberg-Marquardt on orthogonal residuals.  Directions are optimized in a
local tangent chart around the initial guess, ``normalize(w + a*u + b*v)``,
so the problem stays unconstrained.

``fit_cell`` follows a fixed decision order: plane first; a plane that fits
is tested for being a curve; otherwise every surface kind competes; cells no
single surface explains go to sequential RANSAC.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import least_squares
from scipy.spatial import cKDTree

from .errors import (
    AllKindsFailed,
    DegenerateConfiguration,
    NoModelFound,
    NonConvergent,
    TooFewPoints,
)
from .primitives import (
    CURVE_KINDS,
    SURFACE_KINDS,
    Circle,
    Cone,
    Cylinder,
    Ellipse,
    Line,
    Plane,
    Sphere,
    Torus,
    canonical_direction,
    closest_point_on_ellipse,
    orthonormal_basis,
)

MIN_POINTS = {
    "plane": 3,
    "sphere": 4,
    "cylinder": 6,
    "cone": 6,
    "torus": 7,
    "line": 2,
    "circle": 3,
    "ellipse": 5,
}
MAX_ITERATIONS = 100
STEP_TOL = 1e-10
MAX_RADIUS = 100.0
TIE_TOL = 1e-9
ITERATIVE_SUBSAMPLE = 4000


@dataclass(frozen=True)
class FitResult:
    primitive: object
    rms_error: float
    inlier_count: int
    rank_deficient: bool = False
    # Indices into the fitted point set (RANSAC members only).
    inliers: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    @property
    def kind(self) -> str:
        return self.primitive.kind


@dataclass(frozen=True)
class CellFit:
    """One of ``surface``, ``curve``, ``multi`` (RANSAC members) or ``degenerate``."""

    variant: str
    fits: tuple = ()

    def __post_init__(self):
        if self.variant not in ("surface", "curve", "multi", "degenerate"):
            raise ValueError(f"unknown cell fit variant {self.variant!r}")

    @classmethod
    def surface(cls, fit):
        return cls("surface", (fit,))

    @classmethod
    def curve(cls, fit):
        return cls("curve", (fit,))

    @classmethod
    def multi(cls, fits):
        return cls("multi", tuple(fits))

    @classmethod
    def degenerate(cls):
        return cls("degenerate", ())

    @property
    def surfaces(self) -> list:
        return [f for f in self.fits if f.primitive.is_surface]


def _pts(points):
    p = np.asarray(points, dtype=float)
    if p.ndim != 2 or p.shape[1] < 3:
        raise ValueError("expected an (n, 3) point array")
    return p[:, :3]


def _require(points, kind):
    if len(points) < MIN_POINTS[kind]:
        raise TooFewPoints(f"{kind} needs at least {MIN_POINTS[kind]} points, got {len(points)}")


def _rms(prim, points) -> float:
    d = prim.distance(points)
    return float(np.sqrt(np.mean(d * d)))


def _result(prim, points, rank_deficient=False) -> FitResult:
    prim = prim.canonical()
    return FitResult(prim, _rms(prim, points), len(points), rank_deficient)


def _subsample(points, limit=ITERATIVE_SUBSAMPLE):
    if len(points) <= limit:
        return points
    idx = np.linspace(0, len(points) - 1, limit).round().astype(np.int64)
    return points[idx]


def _principal_axes(points):
    """Centroid, eigenvalues (ascending) and eigenvectors (columns) of the scatter."""
    c = points.mean(axis=0)
    q = points - c
    w, v = np.linalg.eigh(q.T @ q / len(points))
    return c, w, v


def _solve(residual, x0, jac="2-point"):
    """Levenberg-Marquardt; NonConvergent when the evaluation budget runs out."""
    x0 = np.asarray(x0, dtype=float)
    n = len(x0)
    try:
        sol = least_squares(
            residual,
            x0,
            jac=jac,
            method="lm",
            xtol=STEP_TOL,
            ftol=1e-15,
            gtol=1e-15,
            max_nfev=MAX_ITERATIONS * (n + 1),
        )
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise NonConvergent(str(exc)) from exc
    if sol.status <= 0 or not np.all(np.isfinite(sol.x)):
        raise NonConvergent(f"refinement stopped without converging ({sol.message})")
    return sol.x


def _chart(w0):
    u, v = orthonormal_basis(w0)
    w0 = np.asarray(w0, dtype=float)

    def direction(a, b):
        d = w0 + a * u + b * v
        return d / np.linalg.norm(d)

    return u, v, direction


def _check_radius(*radii):
    for r in radii:
        if not (0.0 < r <= MAX_RADIUS) or not math.isfinite(r):
            raise NonConvergent(f"radius {r} outside (0, {MAX_RADIUS}]")


def estimate_normals(points, k=12):
    """Unoriented normals from the smallest principal axis of k-nearest neighbourhoods."""
    points = _pts(points)
    k = min(k, len(points))
    if k < 3:
        raise TooFewPoints("normal estimation needs at least 3 points")
    _, idx = cKDTree(points).query(points, k=k)
    nb = points[idx]
    q = nb - nb.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", q, q)
    _, vecs = np.linalg.eigh(cov)
    return vecs[:, :, 0]


# ---------------------------------------------------------------- surfaces


def fit_plane(points) -> FitResult:
    points = _pts(points)
    _require(points, "plane")
    c, w, v = _principal_axes(points)
    scale = max(float(w[-1]), 1e-300)
    if w[-1] <= 1e-24:
        raise DegenerateConfiguration("all points coincide")
    rank_deficient = w[1] <= 1e-12 * scale
    n = v[:, 0]
    return _result(Plane(tuple(n), float(n @ c)), points, rank_deficient)


def _algebraic_sphere(points):
    A = np.c_[2 * points, np.ones(len(points))]
    b = (points * points).sum(axis=1)
    sol, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < 4:
        raise DegenerateConfiguration("points are coplanar; sphere undetermined")
    c = sol[:3]
    r2 = sol[3] + c @ c
    if r2 <= 0:
        raise DegenerateConfiguration("algebraic sphere has no real radius")
    return c, math.sqrt(r2)


def fit_sphere(points) -> FitResult:
    points = _pts(points)
    _require(points, "sphere")
    c0, r0 = _algebraic_sphere(points)
    sub = _subsample(points)

    def residual(x):
        return np.linalg.norm(sub - x[:3], axis=1) - x[3]

    x = _solve(residual, np.r_[c0, r0])
    r = abs(float(x[3]))
    _check_radius(r)
    return _result(Sphere(tuple(x[:3]), r), points)


def _circle_2d(xy):
    """Algebraic (Kasa) circle fit in the plane: center, radius."""
    A = np.c_[2 * xy, np.ones(len(xy))]
    b = (xy * xy).sum(axis=1)
    sol, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < 3:
        raise DegenerateConfiguration("points are collinear; circle undetermined")
    c = sol[:2]
    r2 = sol[2] + c @ c
    if r2 <= 0:
        raise DegenerateConfiguration("algebraic circle has no real radius")
    return c, math.sqrt(r2)


def _axis_candidates(points, normals):
    """Eigenvectors of the normal scatter, then of the point scatter."""
    _, vecs = np.linalg.eigh(normals.T @ normals)
    _, _, pv = _principal_axes(points)
    return [vecs[:, i] for i in range(3)] + [pv[:, i] for i in (2, 0, 1)]


def _cylinder_from_axis(points, w):
    u, v = orthonormal_basis(w)
    xy = np.c_[points @ u, points @ v]
    c2, r = _circle_2d(xy)
    p = c2[0] * u + c2[1] * v
    return p, r


def _refine_cylinder(sub, p0, w0, r0):
    u, v, direction = _chart(w0)

    def unpack(x):
        w = direction(x[0], x[1])
        return p0 + x[2] * u + x[3] * v, w, x[4]

    def residual(x):
        p, w, r = unpack(x)
        d = sub - p
        h = d @ w
        return np.linalg.norm(d - h[:, None] * w, axis=1) - r

    p, w, r = unpack(_solve(residual, [0, 0, 0, 0, r0]))
    r = abs(float(r))
    _check_radius(r)
    return Cylinder(tuple(p), tuple(w), r)


def fit_cylinder(points, normals=None) -> FitResult:
    points = _pts(points)
    _require(points, "cylinder")
    sub = _subsample(points)
    nrm = estimate_normals(sub) if normals is None else _subsample(np.asarray(normals, dtype=float))
    starts = []
    for w in _axis_candidates(sub, nrm):
        try:
            p, r = _cylinder_from_axis(sub, w)
            _check_radius(r)
        except (DegenerateConfiguration, NonConvergent):
            continue
        prim = Cylinder(tuple(p), tuple(w), r)
        starts.append((_rms(prim, sub), len(starts), prim))
    if not starts:
        raise NonConvergent("no usable cylinder initialization")
    starts.sort(key=lambda s: (s[0], s[1]))
    best = None
    for _, _, init in starts[:2]:
        try:
            prim = _refine_cylinder(sub, np.asarray(init.point), np.asarray(init.axis), init.radius)
        except NonConvergent:
            continue
        res = _result(prim, points)
        if best is None or res.rms_error < best.rms_error:
            best = res
    if best is None:
        raise NonConvergent("cylinder refinement failed from every start")
    return best


def _cone_init(points, normals, w):
    """Apex from tangent planes through it (n . (apex - p) = 0), angle from the generators."""
    A = normals
    b = (normals * points).sum(axis=1)
    apex, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < 3:
        raise DegenerateConfiguration("tangent planes do not pin down an apex")
    rel = points - apex
    h = rel @ w
    if np.mean(h) < 0:
        w = -w
        h = -h
    rho = np.linalg.norm(rel - h[:, None] * w, axis=1)
    theta = float(np.arctan2(np.mean(rho), np.mean(h)))
    if not 1e-4 < theta < math.pi / 2 - 1e-4:
        raise NonConvergent("cone initialization produced an invalid angle")
    return apex, w, theta


def _refine_cone(sub, apex0, w0, theta0):
    u, v, direction = _chart(w0)

    def unpack(x):
        return apex0 + x[:3], direction(x[3], x[4]), x[5]

    def residual(x):
        apex, w, t = unpack(x)
        d = sub - apex
        h = d @ w
        rho = np.linalg.norm(d - h[:, None] * w, axis=1)
        return rho * math.cos(t) - h * math.sin(t)

    apex, w, t = unpack(_solve(residual, [0, 0, 0, 0, 0, theta0]))
    t = float(t)
    if not 0.0 < t < math.pi / 2:
        raise NonConvergent(f"cone half-angle {t} outside (0, pi/2)")
    if np.max(np.abs(apex)) > MAX_RADIUS:
        raise NonConvergent("cone apex diverged")
    return Cone(tuple(apex), tuple(w), t)


def fit_cone(points, normals=None) -> FitResult:
    points = _pts(points)
    _require(points, "cone")
    sub = _subsample(points)
    nrm = estimate_normals(sub) if normals is None else _subsample(np.asarray(normals, dtype=float))
    starts = []
    for w in _axis_candidates(sub, nrm)[:3]:
        try:
            apex, w2, theta = _cone_init(sub, nrm, w)
            prim = Cone(tuple(apex), tuple(w2), theta)
        except (DegenerateConfiguration, NonConvergent, ValueError):
            continue
        starts.append((_rms(prim, sub), len(starts), prim))
    if not starts:
        raise NonConvergent("no usable cone initialization")
    starts.sort(key=lambda s: (s[0], s[1]))
    best = None
    for _, _, init in starts[:2]:
        try:
            prim = _refine_cone(sub, np.asarray(init.apex), np.asarray(init.axis), init.half_angle)
        except (NonConvergent, ValueError):
            continue
        res = _result(prim, points)
        if best is None or res.rms_error < best.rms_error:
            best = res
    if best is None:
        raise NonConvergent("cone refinement failed from every start")
    return best


def _torus_init(points, w):
    c = points.mean(axis=0)
    d = points - c
    h = d @ w
    # The tube center sits at the mean height of the samples.
    c = c + np.mean(h) * w
    d = points - c
    h = d @ w
    rho = np.linalg.norm(d - h[:, None] * w, axis=1)
    R = float(np.mean(rho))
    r = float(np.mean(np.hypot(rho - R, h)))
    return c, R, r


def _refine_torus(sub, c0, w0, R0, r0):
    u, v, direction = _chart(w0)

    def unpack(x):
        return c0 + x[:3], direction(x[3], x[4]), x[5], x[6]

    def residual(x):
        c, w, R, r = unpack(x)
        d = sub - c
        h = d @ w
        rho = np.linalg.norm(d - h[:, None] * w, axis=1)
        return np.hypot(rho - R, h) - r

    c, w, R, r = unpack(_solve(residual, [0, 0, 0, 0, 0, R0, r0]))
    R, r = float(R), abs(float(r))
    _check_radius(R, r)
    if not R > r:
        raise NonConvergent("torus refinement produced major <= minor radius")
    return Torus(tuple(c), tuple(w), R, r)


def fit_torus(points, normals=None) -> FitResult:
    points = _pts(points)
    _require(points, "torus")
    sub = _subsample(points)
    nrm = estimate_normals(sub) if normals is None else _subsample(np.asarray(normals, dtype=float))
    _, _, pv = _principal_axes(sub)
    _, nv = np.linalg.eigh(nrm.T @ nrm)
    candidates = [pv[:, 0], nv[:, 2], pv[:, 2], pv[:, 1]]
    best = None
    for w in candidates:
        c, R, r = _torus_init(sub, w)
        if not (R > r > 0):
            continue
        try:
            prim = _refine_torus(sub, c, w, R, r)
        except (NonConvergent, ValueError):
            continue
        res = _result(prim, points)
        if best is None or res.rms_error < best.rms_error - TIE_TOL:
            best = res
    if best is None:
        raise NonConvergent("torus refinement failed from every start")
    return best


_SURFACE_FITTERS = {
    "plane": lambda p, n: fit_plane(p),
    "sphere": lambda p, n: fit_sphere(p),
    "cylinder": fit_cylinder,
    "cone": fit_cone,
    "torus": fit_torus,
}


def fit_surface(points, kind: str, normals=None) -> FitResult:
    if kind not in _SURFACE_FITTERS:
        raise ValueError(f"unknown surface kind {kind!r}")
    return _SURFACE_FITTERS[kind](_pts(points), normals)


# ------------------------------------------------------------------ curves


def fit_line(points) -> FitResult:
    points = _pts(points)
    _require(points, "line")
    c, w, v = _principal_axes(points)
    if w[-1] <= 1e-24:
        raise DegenerateConfiguration("all points coincide")
    return _result(Line(tuple(c), tuple(v[:, 2])), points)


def _plane_frame(points):
    c, w, v = _principal_axes(points)
    if w[-1] <= 1e-24:
        raise DegenerateConfiguration("all points coincide")
    n = canonical_direction(v[:, 0])
    u, vv = orthonormal_basis(n)
    d = points - c
    return c, n, u, vv, np.c_[d @ u, d @ vv]


def fit_circle(points) -> FitResult:
    points = _pts(points)
    _require(points, "circle")
    c, n, u, v, xy = _plane_frame(points)
    c2, r0 = _circle_2d(xy)
    _check_radius(r0)

    def residual(x):
        return np.linalg.norm(xy - x[:2], axis=1) - x[2]

    x = _solve(residual, np.r_[c2, r0]) if len(xy) >= 3 else np.r_[c2, r0]
    r = abs(float(x[2]))
    _check_radius(r)
    center = c + x[0] * u + x[1] * v
    return _result(Circle(tuple(center), tuple(n), r), points)


def _direct_ellipse(xy):
    """Direct least-squares ellipse fit (constraint 4ac - b^2 = 1) on centred data.

    Returns conic coefficients ``(A, B, C, D, E, F)`` of
    ``A x^2 + B x y + C y^2 + D x + E y + F = 0``.
    """
    x, y = xy[:, 0], xy[:, 1]
    D1 = np.c_[x * x, x * y, y * y]
    D2 = np.c_[x, y, np.ones_like(x)]
    S1, S2, S3 = D1.T @ D1, D1.T @ D2, D2.T @ D2
    try:
        T = -np.linalg.solve(S3, S2.T)
    except np.linalg.LinAlgError as exc:
        raise DegenerateConfiguration("ellipse scatter matrix is singular") from exc
    M = S1 + S2 @ T
    M = np.array([M[2] / 2.0, -M[1], M[0] / 2.0])
    vals, vecs = np.linalg.eig(M)
    vecs = np.real(vecs)
    cond = 4 * vecs[0] * vecs[2] - vecs[1] ** 2
    ok = np.flatnonzero(cond > 0)
    if len(ok) == 0:
        raise NonConvergent("no ellipse solution among conic eigenvectors")
    a1 = vecs[:, ok[0]]
    return np.r_[a1, T @ a1]


def _conic_to_ellipse(coef):
    A, B, C, D, E, F = coef
    M = np.array([[A, B / 2], [B / 2, C]])
    try:
        center = np.linalg.solve(2 * M, [-D, -E])
    except np.linalg.LinAlgError as exc:
        raise NonConvergent("conic has no center") from exc
    Fc = F + 0.5 * (D * center[0] + E * center[1])
    vals, vecs = np.linalg.eigh(M)
    if not np.all(vals * -Fc > 0):
        raise NonConvergent("conic is not a real ellipse")
    axes = np.sqrt(-Fc / vals)
    # Largest semi-axis first.
    order = np.argsort(-axes)
    axes = axes[order]
    major = vecs[:, order[0]]
    return center, float(math.atan2(major[1], major[0])), float(axes[0]), float(axes[1])


def _ellipse_local(xy, x):
    """Query points in the ellipse frame, with semi-axes ordered ``a >= b``.

    ``swap`` records that the axes were exchanged (the frame is then turned
    by a quarter so the major axis stays on local x).
    """
    cx, cy, phi, a, b = x
    c, s = math.cos(phi), math.sin(phi)
    dx, dy = xy[:, 0] - cx, xy[:, 1] - cy
    lx, ly = c * dx + s * dy, -s * dx + c * dy
    swap = abs(a) < abs(b)
    if swap:
        return ly, -lx, abs(b), abs(a), swap, c, s
    return lx, ly, abs(a), abs(b), swap, c, s


def _ellipse_residual_2d(xy, x):
    lx, ly, a, b, _, _, _ = _ellipse_local(xy, x)
    px, py = closest_point_on_ellipse(a, b, lx, ly)
    return np.hypot(lx - px, ly - py)


def _ellipse_jacobian_2d(xy, x):
    """Exact derivatives of the point-to-ellipse distance.

    The closest point is stationary, so only the explicit dependence of the
    local query point and of the ellipse point (at fixed angle) contributes.
    """
    lx, ly, a, b, swap, c, s = _ellipse_local(xy, x)
    px, py = closest_point_on_ellipse(a, b, lx, ly)
    ex, ey = lx - px, ly - py
    d = np.hypot(ex, ey)
    safe = np.where(d > 0, d, 1.0)
    nx, ny = np.where(d > 0, ex / safe, 0.0), np.where(d > 0, ey / safe, 0.0)
    # Derivatives of the unswapped local point (c dx + s dy, -s dx + c dy).
    dL = {
        "cx": (np.full_like(lx, -c), np.full_like(lx, s)),
        "cy": (np.full_like(lx, -s), np.full_like(lx, -c)),
    }
    ux, uy = (-ly, lx) if swap else (lx, ly)  # unswapped local coordinates
    dL["phi"] = (uy, -ux)
    J = np.empty((len(lx), 5))
    for k, name in enumerate(("cx", "cy", "phi")):
        gx, gy = dL[name]
        if swap:
            gx, gy = gy, -gx
        J[:, k] = nx * gx + ny * gy
    da = -nx * px / a
    db = -ny * py / b
    sa, sb = math.copysign(1.0, x[3]), math.copysign(1.0, x[4])
    if swap:
        J[:, 3], J[:, 4] = db * sa, da * sb
    else:
        J[:, 3], J[:, 4] = da * sa, db * sb
    return J


def fit_ellipse(points) -> FitResult:
    points = _pts(points)
    _require(points, "ellipse")
    c, n, u, v, xy = _plane_frame(points)
    scale = float(np.abs(xy).max()) or 1.0
    center, phi, a, b = _conic_to_ellipse(_direct_ellipse(xy / scale))
    x0 = np.r_[center * scale, phi, a * scale, b * scale]
    sub = _subsample(xy)
    x = _solve(lambda x: _ellipse_residual_2d(sub, x), x0, jac=lambda x: _ellipse_jacobian_2d(sub, x))
    cx, cy, phi, a, b = x
    a, b = abs(float(a)), abs(float(b))
    if a < b:
        a, b = b, a
        phi += math.pi / 2
    _check_radius(a, b)
    center3 = c + cx * u + cy * v
    major = math.cos(phi) * u + math.sin(phi) * v
    return _result(Ellipse(tuple(center3), tuple(n), tuple(major), a, b), points)


_CURVE_FITTERS = {"line": fit_line, "circle": fit_circle, "ellipse": fit_ellipse}


def fit_curve(points, kind: str) -> FitResult:
    if kind not in _CURVE_FITTERS:
        raise ValueError(f"unknown curve kind {kind!r}")
    return _CURVE_FITTERS[kind](_pts(points))


# --------------------------------------------------------------- selection

_SKIPPABLE = (TooFewPoints, DegenerateConfiguration, NonConvergent, ValueError)


def _best_of(points, kinds, fitter, label):
    best = None
    for kind in kinds:
        try:
            res = fitter(points, kind)
        except _SKIPPABLE:
            continue
        if not math.isfinite(res.rms_error):
            continue
        # Earlier kinds win unless a later one is better by more than TIE_TOL.
        if best is None or res.rms_error < best.rms_error - TIE_TOL:
            best = res
    if best is None:
        raise AllKindsFailed(f"no {label} kind could be fitted to {len(points)} points")
    return best


def fit_best_surface(points, kinds=SURFACE_KINDS, normals=None) -> FitResult:
    points = _pts(points)
    if normals is None and len(points) >= 3:
        # Estimated once on the same subsample the iterative fitters use.
        normals = estimate_normals(_subsample(points))
    return _best_of(points, kinds, lambda p, k: fit_surface(p, k, normals), "surface")


def fit_best_curve(points, kinds=CURVE_KINDS) -> FitResult:
    return _best_of(_pts(points), kinds, fit_curve, "curve")


# ------------------------------------------------------------------ RANSAC

RANSAC_ROUNDS = 10
RANSAC_TRIALS = 24
RANSAC_STOP_FRACTION = 0.05


def _min_inliers(n):
    return max(6, int(math.ceil(RANSAC_STOP_FRACTION * n)))


def _candidate(points, tree, rng, kind, k):
    seed = int(rng.integers(len(points)))
    _, idx = tree.query(points[seed], k=min(k, len(points)))
    return fit_surface(points[np.atleast_1d(idx)], kind).primitive


def ransac_multi(points, eps1: float, seed: int = 0, kinds=SURFACE_KINDS) -> list:
    """Greedy sequential RANSAC over surface kinds.

    Each round draws neighbourhood fits of every kind, keeps the candidate
    with most inliers (distance < 5*eps1), refits it on those inliers and
    removes them.  Stops when fewer than 5% of the points remain, after ten
    rounds, or when a round finds fewer than ``max(6, 5% of n)`` inliers.
    """
    points = _pts(points)
    n = len(points)
    if n < 10:
        raise TooFewPoints(f"RANSAC needs at least 10 points, got {n}")
    rng = np.random.default_rng(seed)
    thresh = 5.0 * eps1
    need = _min_inliers(n)
    remaining = np.arange(n)
    out = []
    for round_no in range(RANSAC_ROUNDS):
        if len(remaining) < RANSAC_STOP_FRACTION * n or len(remaining) < need:
            break
        pts = points[remaining]
        tree = cKDTree(pts)
        k = int(np.clip(len(pts) // 8, 30, 400))
        best_prim, best_mask = None, None
        for _ in range(RANSAC_TRIALS):
            for kind in kinds:
                try:
                    prim = _candidate(pts, tree, rng, kind, k)
                except _SKIPPABLE:
                    continue
                mask = prim.distance(pts) < thresh
                if best_mask is None or mask.sum() > best_mask.sum():
                    best_prim, best_mask = prim, mask
        if best_mask is None or best_mask.sum() < need:
            if round_no == 0:
                raise NoModelFound("no candidate reached the minimum inlier count")
            break
        try:
            refit = fit_surface(pts[best_mask], best_prim.kind).primitive
            mask = refit.distance(pts) < thresh
            if mask.sum() >= best_mask.sum():
                best_prim, best_mask = refit, mask
        except _SKIPPABLE:
            pass
        members = remaining[best_mask]
        prim = best_prim.canonical()
        out.append(FitResult(prim, _rms(prim, points[members]), len(members), inliers=members))
        remaining = remaining[~best_mask]
    if not out:
        raise NoModelFound("RANSAC found no model")
    return out


# ---------------------------------------------------------------- policy


def fit_cell(points, eps1: float, seed: int = 0, spacing: float = None) -> CellFit:
    """Fit a cell's points: plane, then curve, then best surface, then RANSAC.

    Returns ``CellFit.degenerate()`` for empty or tiny point sets (bounding
    box diagonal below three voxels when ``spacing`` is given).
    """
    points = _pts(points) if len(points) else np.zeros((0, 3))
    if len(points) < MIN_POINTS["plane"]:
        return CellFit.degenerate()
    if spacing is not None:
        diag = float(np.linalg.norm(points.max(axis=0) - points.min(axis=0)))
        if diag < 3.0 * spacing:
            return CellFit.degenerate()
    try:
        plane = fit_plane(points)
    except DegenerateConfiguration:
        return CellFit.degenerate()
    if plane.rms_error < eps1:
        try:
            curve = fit_best_curve(points)
        except AllKindsFailed:
            curve = None
        if curve is not None and curve.rms_error < eps1:
            return CellFit.curve(curve)
        return CellFit.surface(plane)
    try:
        surf = fit_best_surface(points)
    except AllKindsFailed:
        surf = None
    if surf is not None and surf.rms_error < eps1:
        return CellFit.surface(surf)
    try:
        return CellFit.multi(ransac_multi(points, eps1, seed))
    except (NoModelFound, TooFewPoints):
        # No structure at all: keep the best single surface if there is one.
        if surf is not None:
            return CellFit.multi([surf])
        return CellFit.degenerate()
