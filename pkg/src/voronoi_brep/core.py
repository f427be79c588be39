"""Shared configuration, grid geometry and voxel indexing.

Grids are stored as numpy arrays indexed ``[x, y, z]``.  The flat voxel
index used by the binary formats is x-fastest, ``idx = x + r*(y + r*z)``,
which is numpy's Fortran order for such arrays.  Every sample point refers
to a voxel *center*.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional, Sequence

import numpy as np

MATCH_THRESHOLDS = (0.1, 0.05, 0.02, 0.01, 0.005)


@dataclass(frozen=True)
class Config:
    r: int = 256
    patch_stride: int = 16
    patch_size: int = 32
    eps1: float = 0.001
    eps2: float = 0.02
    eps3: float = 0.05
    # None means 0.5 / spacing**2, resolved by ``tau``.
    detect_tau: Optional[float] = None
    # Threshold on the scale-free response |f3| * d * spacing (convex edges).
    detect_tau_rel: float = 0.2
    n_dirs: int = 8
    d_max: float = 0.3
    hole_fill_steps: int = 4
    min_cell_voxels: int = 8
    match_thresholds: tuple = MATCH_THRESHOLDS
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("resolution must be positive")
        if not (self.eps1 < self.eps2 < self.eps3):
            raise ValueError("thresholds must satisfy eps1 < eps2 < eps3")
        if self.patch_stride > self.patch_size:
            raise ValueError("patch stride must not exceed patch size")
        positive = [self.eps1, self.eps2, self.eps3, self.d_max, self.detect_tau_rel, *self.match_thresholds]
        if self.detect_tau is not None:
            positive.append(self.detect_tau)
        if min(positive) <= 0:
            raise ValueError("all thresholds must be positive")
        if self.n_dirs < 2:
            raise ValueError("n_dirs must be >= 2")
        object.__setattr__(self, "match_thresholds", tuple(float(t) for t in self.match_thresholds))

    @property
    def spacing(self) -> float:
        return 1.0 / self.r

    @property
    def tau(self) -> float:
        if self.detect_tau is not None:
            return self.detect_tau
        return 0.5 / self.spacing ** 2

    def replace(self, **changes) -> "Config":
        return replace(self, **changes)


class GridCoord(NamedTuple):
    x: int
    y: int
    z: int


@dataclass(frozen=True)
class GridGeometry:
    """Placement of an ``r**3`` grid in normalized world units."""

    r: int
    origin: tuple = (0.0, 0.0, 0.0)
    spacing: float = 0.0

    def __post_init__(self):
        if self.r < 1:
            raise ValueError("resolution must be positive")
        spacing = self.spacing if self.spacing else 1.0 / self.r
        if spacing <= 0:
            raise ValueError("spacing must be positive")
        object.__setattr__(self, "spacing", float(spacing))
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))

    @classmethod
    def unit(cls, r: int) -> "GridGeometry":
        return cls(r, (0.0, 0.0, 0.0), 1.0 / r)

    @property
    def shape(self):
        return (self.r, self.r, self.r)

    @property
    def size(self) -> int:
        return self.r ** 3

    def contains(self, c) -> bool:
        return all(0 <= int(v) < self.r for v in c)

    def index_of(self, c) -> int:
        x, y, z = (int(v) for v in c)
        return x + self.r * (y + self.r * z)

    def coord_of(self, idx: int) -> GridCoord:
        idx = int(idx)
        x = idx % self.r
        y = (idx // self.r) % self.r
        z = idx // (self.r * self.r)
        return GridCoord(x, y, z)

    def world_of(self, c) -> np.ndarray:
        return np.asarray(self.origin) + (np.asarray(c, dtype=float) + 0.5) * self.spacing

    def centers(self) -> np.ndarray:
        """All voxel centers as an ``(r, r, r, 3)`` array."""
        ax = np.asarray(self.origin)[:, None] + (np.arange(self.r) + 0.5)[None, :] * self.spacing
        X, Y, Z = np.meshgrid(ax[0], ax[1], ax[2], indexing="ij")
        return np.stack([X, Y, Z], axis=-1)

    def voxel_of(self, points) -> np.ndarray:
        """Integer voxel coordinates containing each point (may be out of range)."""
        p = (np.atleast_2d(points) - np.asarray(self.origin)) / self.spacing
        return np.floor(p).astype(np.int64)

    def to_continuous(self, points) -> np.ndarray:
        """World points to fractional index coordinates (voxel centers are integers)."""
        return (np.atleast_2d(points) - np.asarray(self.origin)) / self.spacing - 0.5


@dataclass(frozen=True)
class VoxelGrid:
    """Dense cubic grid with an arbitrary per-voxel payload.

    ``values`` has shape ``(r, r, r)`` or ``(r, r, r, channels)``.
    """

    geometry: GridGeometry
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.shape[:3] != self.geometry.shape:
            raise ValueError(f"payload shape {v.shape} does not match r={self.geometry.r}")
        v = v.copy() if v.flags.writeable else v
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def r(self) -> int:
        return self.geometry.r

    def flat(self) -> np.ndarray:
        """Payload in x-fastest index order, shape ``(r**3, ...)``."""
        v = self.values
        if v.ndim == 3:
            return v.reshape(-1, order="F")
        return v.reshape(-1, v.shape[3], order="F")

    @classmethod
    def from_flat(cls, geometry: GridGeometry, flat) -> "VoxelGrid":
        flat = np.asarray(flat)
        if flat.shape[0] != geometry.size:
            raise ValueError(f"expected {geometry.size} payloads, got {flat.shape[0]}")
        return cls(geometry, flat.reshape(geometry.shape + flat.shape[1:], order="F"))

    def __getitem__(self, c):
        return self.values[tuple(int(v) for v in c)]


_OFFSETS_6 = [(-1, 0, 0), (1, 0, 0), (0, -1, 0), (0, 1, 0), (0, 0, -1), (0, 0, 1)]
_OFFSETS_26 = [
    (dx, dy, dz)
    for dz in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dx in (-1, 0, 1)
    if (dx, dy, dz) != (0, 0, 0)
]


def voxel_neighbors(c, connectivity: int, r: int) -> list:
    """In-bounds 6- or 26-neighbors of ``c``, sorted by flat index."""
    if connectivity == 6:
        offsets = _OFFSETS_6
    elif connectivity == 26:
        offsets = _OFFSETS_26
    else:
        raise ValueError("connectivity must be 6 or 26")
    x, y, z = (int(v) for v in c)
    out = []
    for dx, dy, dz in offsets:
        n = (x + dx, y + dy, z + dz)
        if all(0 <= v < r for v in n):
            out.append(GridCoord(*n))
    out.sort(key=lambda q: q.x + r * (q.y + r * q.z))
    return out


def world_of(c, geometry: GridGeometry) -> np.ndarray:
    """Voxel center of ``c``: ``origin + (c + 0.5) * spacing``."""
    return geometry.world_of(c)


def index_of(c, r: int) -> int:
    return GridGeometry.unit(r).index_of(c)


def coord_of(idx: int, r: int) -> GridCoord:
    return GridGeometry.unit(r).coord_of(idx)


@dataclass(frozen=True)
class Normalization:
    """``normalized = (world - translation) * scale``."""

    scale: float = 1.0
    translation: tuple = (0.0, 0.0, 0.0)

    def apply(self, points) -> np.ndarray:
        return (np.asarray(points, dtype=float) - np.asarray(self.translation)) * self.scale

    def invert(self, points) -> np.ndarray:
        return np.asarray(points, dtype=float) / self.scale + np.asarray(self.translation)

    def to_dict(self) -> dict:
        return {"scale": self.scale, "translation": list(self.translation)}

    @classmethod
    def from_dict(cls, d) -> "Normalization":
        return cls(float(d["scale"]), tuple(float(v) for v in d["translation"]))


def normalize_points(points, margin: float = 0.0):
    """Fit ``points`` into ``[margin, 1 - margin]^3`` with a uniform, centered scale.

    Returns ``(normalized_points, Normalization)``.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3 or len(pts) == 0:
        raise ValueError("expected a non-empty (n, 3) array")
    if not 0.0 <= margin < 0.5:
        raise ValueError("margin must be in [0, 0.5)")
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    extent = float((hi - lo).max())
    scale = (1.0 - 2.0 * margin) / extent if extent > 0 else 1.0
    # Center the scaled box inside the unit cube.
    center = 0.5 * (lo + hi)
    translation = center - 0.5 / scale
    norm = Normalization(scale, tuple(float(v) for v in translation))
    return norm.apply(pts), norm


def parallel_map(fn, items: Sequence, threads: int = 1) -> list:
    """Order-preserving map, optionally over a thread pool."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0 or not math.isfinite(n):
        raise ValueError("cannot normalize a zero or non-finite vector")
    return v / n
