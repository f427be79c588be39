"""Voronoi-boundary detection on a UDF grid.

The analytic detector looks for jumps in the UDF's second derivative: along
a fan of directions tangent to the level set (plus the gradient direction),
it estimates the third directional derivative with a 5-point stencil and
flags voxels where its magnitude is large.

Two thresholds are combined.  ``tau`` (default ``0.5 / h**2``) catches
creases, where the first derivative flips.  Convex edges and corners only
produce a jump of the second derivative, of size about ``1/d`` at distance
``d``, so their stencil response ``|f3| ~ 1/(d h)`` decays with distance;
``tau_rel`` thresholds the scale-free product ``|f3| * d * h`` instead.

``ingest_external`` is the seam for boundary grids predicted by an
external model.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import map_coordinates

from .core import Config, GridGeometry
from .errors import GridTooSmall, OutOfStencil, ResolutionMismatch
from .grids import BoundaryGrid
from .udf import UdfGrid

_CHUNK = 1 << 16
_STEPS = np.array([-2.0, -1.0, 0.0, 1.0, 2.0])


@dataclass(frozen=True)
class DetectorParams:
    tau: float
    n_dirs: int = 8
    d_max: float = 0.3
    tau_rel: float = 0.2

    def __post_init__(self):
        if not self.tau > 0 or not self.tau_rel > 0:
            raise ValueError("tau and tau_rel must be positive")
        if self.n_dirs < 2:
            raise ValueError("n_dirs must be >= 2")

    @classmethod
    def from_config(cls, cfg: Config, spacing: float = None) -> "DetectorParams":
        if cfg.detect_tau is not None:
            tau = cfg.detect_tau
        else:
            h = spacing if spacing is not None else cfg.spacing
            tau = 0.5 / h ** 2
        return cls(tau=tau, n_dirs=cfg.n_dirs, d_max=cfg.d_max, tau_rel=cfg.detect_tau_rel)


@dataclass(frozen=True)
class PatchSpec:
    """Overlapping cubic patches; the last origin on each axis is clamped to ``r - size``."""

    r: int
    stride: int
    size: int

    def __post_init__(self):
        if self.stride < 1 or self.size < 1:
            raise ValueError("stride and size must be positive")
        if self.stride > self.size:
            raise ValueError("stride larger than size leaves voxels uncovered")

    @property
    def patch_size(self) -> int:
        return min(self.size, self.r)

    @property
    def axis_origins(self) -> list:
        k = self.patch_size
        origins = list(range(0, self.r - k + 1, self.stride))
        if origins[-1] != self.r - k:
            origins.append(self.r - k)
        return origins

    @property
    def origins(self) -> list:
        ax = self.axis_origins
        return [(x, y, z) for z in ax for y in ax for x in ax]

    @classmethod
    def from_config(cls, cfg: Config, r: int = None) -> "PatchSpec":
        return cls(r or cfg.r, cfg.patch_stride, cfg.patch_size)


def _trilinear(d, coords):
    return map_coordinates(d, coords.T, order=1, mode="nearest")


def _stencil(d, centers, dirs):
    """Field values at ``center + t * dir`` for ``t`` in -2..2 (index units)."""
    pts = centers[:, None, :] + _STEPS[None, :, None] * dirs[:, None, :]
    vals = _trilinear(d, pts.reshape(-1, 3)).reshape(len(centers), len(_STEPS))
    # Grid-aligned center sample is exact; avoid interpolation round-off there.
    vals[:, 2] = d[tuple(centers.astype(np.int64).T)]
    return vals


def _derivatives(vals, h):
    fm2, fm1, f0, fp1, fp2 = vals.T
    f2 = (fp1 - 2.0 * f0 + fm1) / h ** 2
    f3 = (fp2 - 2.0 * fp1 + 2.0 * fm1 - fm2) / (2.0 * h ** 3)
    return f2, f3


def _in_stencil(c, r):
    return all(2 <= int(v) <= r - 3 for v in c)


def directional_derivatives(udf: UdfGrid, c, direction, h: float = None):
    """Second and third derivative of ``d`` along ``direction`` at voxel ``c``.

    Off-grid samples use trilinear interpolation; ``h`` defaults to the spacing
    (one voxel per stencil step).
    """
    if not _in_stencil(c, udf.r):
        raise OutOfStencil(f"voxel {tuple(c)} is within 2 voxels of the grid faces")
    direction = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(direction) - 1.0) > 1e-9:
        raise ValueError("direction must be a unit vector")
    h = udf.spacing if h is None else h
    step = h / udf.spacing
    vals = _stencil(udf.d, np.asarray([c], dtype=float), (direction * step)[None, :])
    f2, f3 = _derivatives(vals, h)
    return float(f2[0]), float(f3[0])


def _fan_directions(g_unit, n_dirs):
    """``n_dirs`` directions evenly spread over a half-turn of the tangent plane."""
    seed_axis = np.argmin(np.abs(g_unit), axis=1)
    seed = np.zeros_like(g_unit)
    seed[np.arange(len(g_unit)), seed_axis] = 1.0
    u = np.cross(g_unit, seed)
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    v = np.cross(g_unit, u)
    angles = np.arange(n_dirs) * (math.pi / n_dirs)
    return [math.cos(a) * u + math.sin(a) * v for a in angles]


def analytic_probabilities(udf: UdfGrid, params: DetectorParams):
    """Per-voxel boundary probability and a mask of voxels the detector could judge.

    Voxels with ``d > d_max`` are judged non-boundary; voxels within two
    voxels of the grid faces are not judged (their stencil leaves the grid).
    """
    r, h = udf.r, udf.spacing
    d, g = udf.d, udf.g
    p = np.zeros(d.shape)
    valid = d > params.d_max

    near = d <= params.d_max
    gnorm = np.linalg.norm(g, axis=-1)
    degenerate = near & (gnorm < 1e-6)
    p[degenerate] = 1.0
    valid |= degenerate

    inner = np.zeros(d.shape, dtype=bool)
    if r >= 5:
        inner[2:r - 2, 2:r - 2, 2:r - 2] = True
    todo = np.argwhere(near & inner & ~degenerate)
    valid[tuple(todo.T)] = True
    for start in range(0, len(todo), _CHUNK):
        idx = todo[start:start + _CHUNK]
        sel = tuple(idx.T)
        centers = idx.astype(float)
        g_unit = g[sel] / gnorm[sel][:, None]
        best = np.zeros(len(idx))
        for direction in _fan_directions(g_unit, params.n_dirs):
            _, f3 = _derivatives(_stencil(d, centers, direction), h)
            best = np.maximum(best, np.abs(f3))
        # Along the gradient the stencil would cross the surface itself (the
        # d = 0 kink) unless the voxel is at least two steps away from it.
        far = d[sel] >= 2.0 * h
        if far.any():
            _, f3 = _derivatives(_stencil(d, centers[far], g_unit[far]), h)
            best[far] = np.maximum(best[far], np.abs(f3))
        score = np.maximum(best / params.tau, best * d[sel] * h / params.tau_rel)
        p[sel] = np.clip(score, 0.0, 1.0)
    return p, valid


def detect_analytic(udf: UdfGrid, params: DetectorParams) -> BoundaryGrid:
    if udf.r < 8:
        raise GridTooSmall(f"analytic detection needs r >= 8, got {udf.r}")
    p, _ = analytic_probabilities(udf, params)
    return BoundaryGrid(udf.geometry, p)


def analytic_patch_detector(params: DetectorParams):
    """Per-patch detector for ``tile_and_merge``; abstains where its stencil is cut off."""

    def detect(patch: UdfGrid):
        return analytic_probabilities(patch, params)

    return detect


def _patch(udf: UdfGrid, origin, k) -> UdfGrid:
    ox, oy, oz = origin
    geo = udf.geometry
    sub_origin = tuple(np.asarray(geo.origin) + np.asarray(origin) * geo.spacing)
    sl = (slice(ox, ox + k), slice(oy, oy + k), slice(oz, oz + k))
    return UdfGrid(GridGeometry(k, sub_origin, geo.spacing), udf.d[sl], udf.g[sl])


def tile_and_merge(udf: UdfGrid, spec: PatchSpec, detector) -> BoundaryGrid:
    """Run ``detector`` on every patch independently and average the overlaps.

    ``detector(patch)`` returns a ``BoundaryGrid``, a probability array, or a
    ``(probabilities, valid_mask)`` pair; voxels outside the mask abstain
    from the average.  A voxel no patch judged gets probability 0.
    """
    if spec.r != udf.r:
        raise ResolutionMismatch(f"patch spec is for r={spec.r}, grid has r={udf.r}")
    k = spec.patch_size
    total = np.zeros(udf.d.shape)
    count = np.zeros(udf.d.shape)
    for origin in spec.origins:
        out = detector(_patch(udf, origin, k))
        if isinstance(out, tuple):
            probs, valid = out
        else:
            probs, valid = out, None
        probs = probs.p if isinstance(probs, BoundaryGrid) else np.asarray(probs, dtype=float)
        valid = np.ones(probs.shape, dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
        ox, oy, oz = origin
        sl = (slice(ox, ox + k), slice(oy, oy + k), slice(oz, oz + k))
        total[sl] += np.where(valid, probs, 0.0)
        count[sl] += valid
    p = np.divide(total, count, out=np.zeros_like(total), where=count > 0)
    return BoundaryGrid(udf.geometry, np.clip(p, 0.0, 1.0))


def ingest_external(path, expected_r: int) -> BoundaryGrid:
    """Load an externally predicted NVDB probability grid."""
    from .io import read_nvdb

    grid = read_nvdb(path)
    if grid.geometry.r != expected_r:
        raise ResolutionMismatch(f"boundary grid has r={grid.geometry.r}, expected {expected_r}")
    return grid
