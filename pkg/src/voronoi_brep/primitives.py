"""Surface and curve primitives: exact distances, projections, canonical forms."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

SURFACE_KINDS = ("plane", "sphere", "cylinder", "cone", "torus")
CURVE_KINDS = ("line", "circle", "ellipse")


def _vec(v):
    return np.asarray(v, dtype=float)


def _as_unit_tuple(v):
    v = _vec(v)
    n = float(np.linalg.norm(v))
    if not n > 0 or not math.isfinite(n):
        raise ValueError("direction must be a finite non-zero vector")
    # Already-unit vectors are kept bit for bit so serialization round-trips.
    if abs(n - 1.0) <= 4 * np.finfo(float).eps:
        return tuple(float(c) for c in v)
    return tuple(float(c) for c in v / n)


def canonical_direction(v, tol=1e-12):
    """Flip ``v`` so its z component is non-negative (ties: y, then x)."""
    v = _vec(v)
    for axis in (2, 1, 0):
        if abs(v[axis]) > tol:
            return v if v[axis] > 0 else -v
    return v


def _foot(p, w):
    """Point of the line through ``p`` along unit ``w`` closest to the origin.

    A point that is already the foot is returned unchanged, so canonical
    forms are idempotent bit for bit.
    """
    p = _vec(p)
    t = p @ w
    if abs(t) > 4 * np.finfo(float).eps * max(float(np.linalg.norm(p)), 1.0):
        p = p - t * w
    return p


def orthonormal_basis(w):
    """Two unit vectors spanning the plane orthogonal to unit vector ``w``.

    The seed axis is the coordinate axis least aligned with ``w`` (lowest index
    on ties), so the basis is a deterministic function of ``w``.
    """
    w = _vec(w)
    seed = np.zeros(3)
    seed[int(np.argmin(np.abs(w)))] = 1.0
    u = np.cross(w, seed)
    u /= np.linalg.norm(u)
    v = np.cross(w, u)
    return u, v


def _points(pts):
    p = np.asarray(pts, dtype=float)
    return p.reshape(1, 3) if p.ndim == 1 else p


def _radial(pts, origin, axis):
    """Axial coordinate, radial vector and radial length about an axis line."""
    v = _points(pts) - _vec(origin)
    w = _vec(axis)
    h = v @ w
    radial = v - h[:, None] * w
    rho = np.linalg.norm(radial, axis=1)
    return h, radial, rho


def _safe_radial_unit(radial, rho, axis):
    out = np.empty_like(radial)
    ok = rho > 1e-15
    out[ok] = radial[ok] / rho[ok, None]
    if (~ok).any():
        out[~ok] = orthonormal_basis(axis)[0]
    return out


class Primitive:
    kind = ""
    is_surface = True

    def distance(self, pts) -> np.ndarray:
        raise NotImplementedError

    def project(self, pts) -> np.ndarray:
        raise NotImplementedError

    def canonical(self):
        return self

    def to_dict(self) -> dict:
        d = {"type": self.kind}
        for f in fields(self):
            val = getattr(self, f.name)
            d[f.name] = list(val) if isinstance(val, tuple) else val
        return d

    def params(self) -> np.ndarray:
        out = []
        for f in fields(self):
            val = getattr(self, f.name)
            out.extend(val if isinstance(val, tuple) else [val])
        return np.asarray(out, dtype=float)


@dataclass(frozen=True)
class Plane(Primitive):
    normal: tuple
    offset: float
    kind = "plane"

    def __post_init__(self):
        n = _vec(self.normal)
        norm = float(np.linalg.norm(n))
        if not norm > 0:
            raise ValueError("plane normal must be non-zero")
        if abs(norm - 1.0) <= 4 * np.finfo(float).eps:
            norm = 1.0
        object.__setattr__(self, "normal", tuple(float(c) for c in n / norm))
        object.__setattr__(self, "offset", float(self.offset) / norm)

    def signed_distance(self, pts):
        return _points(pts) @ _vec(self.normal) - self.offset

    def distance(self, pts):
        return np.abs(self.signed_distance(pts))

    def project(self, pts):
        return _points(pts) - self.signed_distance(pts)[:, None] * _vec(self.normal)

    def canonical(self):
        n = _vec(self.normal)
        c = canonical_direction(n)
        if np.dot(c, n) < 0:
            return Plane(tuple(-n), -self.offset)
        return self


@dataclass(frozen=True)
class Sphere(Primitive):
    center: tuple
    radius: float
    kind = "sphere"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if not float(self.radius) > 0:
            raise ValueError("sphere radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    def distance(self, pts):
        return np.abs(np.linalg.norm(_points(pts) - _vec(self.center), axis=1) - self.radius)

    def project(self, pts):
        v = _points(pts) - _vec(self.center)
        n = np.linalg.norm(v, axis=1)
        dirs = np.tile([0.0, 0.0, 1.0], (len(v), 1))
        ok = n > 1e-15
        dirs[ok] = v[ok] / n[ok, None]
        return _vec(self.center) + self.radius * dirs


@dataclass(frozen=True)
class Cylinder(Primitive):
    point: tuple
    axis: tuple
    radius: float
    kind = "cylinder"

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(c) for c in self.point))
        object.__setattr__(self, "axis", _as_unit_tuple(self.axis))
        if not float(self.radius) > 0:
            raise ValueError("cylinder radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    def distance(self, pts):
        _, _, rho = _radial(pts, self.point, self.axis)
        return np.abs(rho - self.radius)

    def project(self, pts):
        h, radial, rho = _radial(pts, self.point, self.axis)
        ru = _safe_radial_unit(radial, rho, self.axis)
        return _vec(self.point) + h[:, None] * _vec(self.axis) + self.radius * ru

    def canonical(self):
        w = canonical_direction(self.axis)
        return Cylinder(tuple(_foot(self.point, w)), tuple(w), self.radius)


@dataclass(frozen=True)
class Cone(Primitive):
    """Single-nappe cone opening from ``apex`` along ``axis``."""

    apex: tuple
    axis: tuple
    half_angle: float
    kind = "cone"

    def __post_init__(self):
        object.__setattr__(self, "apex", tuple(float(c) for c in self.apex))
        object.__setattr__(self, "axis", _as_unit_tuple(self.axis))
        a = float(self.half_angle)
        if not 0.0 < a < math.pi / 2:
            raise ValueError("cone half-angle must lie in (0, pi/2)")
        object.__setattr__(self, "half_angle", a)

    def _frame(self, pts):
        h, radial, rho = _radial(pts, self.apex, self.axis)
        s, c = math.sin(self.half_angle), math.cos(self.half_angle)
        t = rho * s + h * c  # coordinate along the generator through the point
        return h, radial, rho, s, c, t

    def signed_distance(self, pts):
        """Distance to the generator line, ignoring the apex region."""
        h, _, rho, s, c, _ = self._frame(pts)
        return rho * c - h * s

    def distance(self, pts):
        h, _, rho, s, c, t = self._frame(pts)
        d = np.abs(rho * c - h * s)
        behind = t < 0
        d[behind] = np.sqrt(rho[behind] ** 2 + h[behind] ** 2)
        return d

    def project(self, pts):
        h, radial, rho, s, c, t = self._frame(pts)
        ru = _safe_radial_unit(radial, rho, self.axis)
        t = np.maximum(t, 0.0)
        return _vec(self.apex) + (t * c)[:, None] * _vec(self.axis) + (t * s)[:, None] * ru

    def radius_at(self, height):
        return height * math.tan(self.half_angle)


@dataclass(frozen=True)
class Torus(Primitive):
    center: tuple
    axis: tuple
    major: float
    minor: float
    kind = "torus"

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "axis", _as_unit_tuple(self.axis))
        R, r = float(self.major), float(self.minor)
        if not R > r > 0:
            raise ValueError("torus requires major > minor > 0")
        object.__setattr__(self, "major", R)
        object.__setattr__(self, "minor", r)

    def _core(self, pts):
        h, radial, rho = _radial(pts, self.center, self.axis)
        ru = _safe_radial_unit(radial, rho, self.axis)
        return h, rho, ru

    def distance(self, pts):
        h, rho, _ = self._core(pts)
        return np.abs(np.hypot(rho - self.major, h) - self.minor)

    def project(self, pts):
        p = _points(pts)
        h, rho, ru = self._core(p)
        q = _vec(self.center) + self.major * ru
        v = p - q
        n = np.linalg.norm(v, axis=1)
        dirs = ru.copy()
        ok = n > 1e-15
        dirs[ok] = v[ok] / n[ok, None]
        return q + self.minor * dirs

    def canonical(self):
        return Torus(self.center, tuple(canonical_direction(self.axis)), self.major, self.minor)


@dataclass(frozen=True)
class Line(Primitive):
    point: tuple
    direction: tuple
    kind = "line"
    is_surface = False

    def __post_init__(self):
        object.__setattr__(self, "point", tuple(float(c) for c in self.point))
        object.__setattr__(self, "direction", _as_unit_tuple(self.direction))

    def param(self, pts):
        return (_points(pts) - _vec(self.point)) @ _vec(self.direction)

    def at(self, t):
        return _vec(self.point) + np.asarray(t, dtype=float)[:, None] * _vec(self.direction)

    def distance(self, pts):
        _, _, rho = _radial(pts, self.point, self.direction)
        return rho

    def project(self, pts):
        return self.at(self.param(pts))

    def canonical(self):
        d = canonical_direction(self.direction)
        return Line(tuple(_foot(self.point, d)), tuple(d))


@dataclass(frozen=True)
class Circle(Primitive):
    center: tuple
    normal: tuple
    radius: float
    kind = "circle"
    is_surface = False

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        object.__setattr__(self, "normal", _as_unit_tuple(self.normal))
        if not float(self.radius) > 0:
            raise ValueError("circle radius must be positive")
        object.__setattr__(self, "radius", float(self.radius))

    def distance(self, pts):
        h, _, rho = _radial(pts, self.center, self.normal)
        return np.hypot(rho - self.radius, h)

    def project(self, pts):
        h, radial, rho = _radial(pts, self.center, self.normal)
        ru = _safe_radial_unit(radial, rho, self.normal)
        return _vec(self.center) + self.radius * ru

    def at(self, theta):
        u, v = orthonormal_basis(self.normal)
        theta = np.asarray(theta, dtype=float)
        return _vec(self.center) + self.radius * (np.cos(theta)[:, None] * u + np.sin(theta)[:, None] * v)

    def canonical(self):
        return Circle(self.center, tuple(canonical_direction(self.normal)), self.radius)


@dataclass(frozen=True)
class Ellipse(Primitive):
    center: tuple
    normal: tuple
    major_axis: tuple
    a: float
    b: float
    kind = "ellipse"
    is_surface = False

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        n = _vec(_as_unit_tuple(self.normal))
        m = _vec(self.major_axis)
        m = m - (m @ n) * n
        object.__setattr__(self, "normal", tuple(float(c) for c in n))
        object.__setattr__(self, "major_axis", _as_unit_tuple(m))
        a, b = float(self.a), float(self.b)
        if not a >= b > 0:
            raise ValueError("ellipse requires a >= b > 0")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def _local(self, pts):
        n, u = _vec(self.normal), _vec(self.major_axis)
        v = np.cross(n, u)
        d = _points(pts) - _vec(self.center)
        return d @ u, d @ v, d @ n, u, v

    def distance(self, pts):
        x, y, h, _, _ = self._local(pts)
        cx, cy = closest_point_on_ellipse(self.a, self.b, x, y)
        return np.sqrt((x - cx) ** 2 + (y - cy) ** 2 + h ** 2)

    def project(self, pts):
        x, y, _, u, v = self._local(pts)
        cx, cy = closest_point_on_ellipse(self.a, self.b, x, y)
        return _vec(self.center) + cx[:, None] * u + cy[:, None] * v

    def at(self, theta):
        n, u = _vec(self.normal), _vec(self.major_axis)
        v = np.cross(n, u)
        theta = np.asarray(theta, dtype=float)
        return _vec(self.center) + (self.a * np.cos(theta))[:, None] * u + (self.b * np.sin(theta))[:, None] * v

    def canonical(self):
        return Ellipse(
            self.center,
            tuple(canonical_direction(self.normal)),
            tuple(canonical_direction(self.major_axis)),
            self.a,
            self.b,
        )


def closest_point_on_ellipse(a, b, x, y, iterations=120):
    """Closest points on the axis-aligned ellipse ``(x/a)^2 + (y/b)^2 = 1``.

    Vectorized form of Eberly's robust bisection (``a >= b > 0``): the query is
    reflected into the first quadrant, the root of the standard secular
    function is bracketed and bisected, and the result is reflected back.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    sx, sy = np.sign(x), np.sign(y)
    sx[sx == 0] = 1.0
    sy[sy == 0] = 1.0
    y0, y1 = np.abs(x), np.abs(y)
    x0 = np.empty_like(y0)
    x1 = np.empty_like(y1)

    # Below this height the on-axis solution is within ``tiny`` of optimal.
    tiny = 1e-13 * b
    gen = (y1 > tiny) & (y0 > 0)
    if gen.any():
        z0, z1 = y0[gen] / a, y1[gen] / b
        g = z0 ** 2 + z1 ** 2 - 1.0
        r0 = (a / b) ** 2
        n0 = r0 * z0
        s0 = z1 - 1.0
        s1 = np.where(g < 0, 0.0, np.hypot(n0, z1) - 1.0)
        s = 0.5 * (s0 + s1)
        for it in range(iterations):
            s = 0.5 * (s0 + s1)
            ratio0 = n0 / (s + r0)
            ratio1 = z1 / (s + 1.0)
            f = ratio0 ** 2 + ratio1 ** 2 - 1.0
            pos = f > 0
            s0 = np.where(pos, s, s0)
            s1 = np.where(pos, s1, s)
            # Stop once every bracket has collapsed to float resolution.
            if it % 8 == 7 and np.all(s1 - s0 <= 4 * np.finfo(float).eps * np.maximum(np.abs(s0), 1.0)):
                break
        s = np.where(g == 0, 0.0, s)
        with np.errstate(divide="ignore", invalid="ignore"):
            gx0 = r0 * y0[gen] / (s + r0)
            gx1 = y1[gen] / (s + 1.0)
        # Close to the major axis s + 1 loses its digits; recover the height
        # from the ellipse equation instead (x0 stays well conditioned).
        ill = (s + 1.0) < 1e-3
        gx1[ill] = b * np.sqrt(np.clip(1.0 - (gx0[ill] / a) ** 2, 0.0, None))
        # At the center the root is not resolvable in floating point; the
        # minor-axis vertex is within twice the query's offset of optimal.
        central = z0 ** 2 + z1 ** 2 < 1e-20
        gx0[central] = 0.0
        gx1[central] = b
        x0[gen] = gx0
        x1[gen] = gx1

    yaxis = (y1 > tiny) & (y0 == 0)
    x0[yaxis] = 0.0
    x1[yaxis] = b

    xaxis = y1 <= tiny
    if xaxis.any():
        numer = a * y0[xaxis]
        denom = a * a - b * b
        inside = numer < denom
        xde = np.where(inside, numer / denom if denom > 0 else 0.0, 1.0)
        x0[xaxis] = np.where(inside, a * xde, a)
        x1[xaxis] = np.where(inside, b * np.sqrt(np.clip(1.0 - xde ** 2, 0.0, None)), 0.0)
    return sx * x0, sy * x1


_REGISTRY = {
    "plane": Plane,
    "sphere": Sphere,
    "cylinder": Cylinder,
    "cone": Cone,
    "torus": Torus,
    "line": Line,
    "circle": Circle,
    "ellipse": Ellipse,
}


def primitive_from_dict(d: dict) -> Primitive:
    d = dict(d)
    kind = d.pop("type", None)
    if kind not in _REGISTRY:
        raise ValueError(f"unknown primitive type {kind!r}")
    cls = _REGISTRY[kind]
    names = [f.name for f in fields(cls)]
    args = {}
    for name in names:
        if name not in d:
            raise ValueError(f"{kind}: missing field {name!r}")
        val = d[name]
        args[name] = tuple(float(v) for v in val) if isinstance(val, (list, tuple)) else float(val)
    return cls(**args)


def is_surface(prim) -> bool:
    return prim.kind in SURFACE_KINDS
