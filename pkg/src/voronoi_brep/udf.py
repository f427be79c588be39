"""Voxelized unsigned distance fields from point sets.

Distances are exact nearest-neighbor distances to the input samples.  A
k-d tree narrows the candidates, but the winning sample is re-selected with
the same arithmetic a brute-force scan would use, lowest sample index first
on ties, so results are bit-identical to the O(n * r^3) oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .core import Config, GridGeometry, VoxelGrid
from .errors import EmptyInput, GridTooSmall
from .grids import LabelGrid

_CHUNK = 1 << 17
_CANDIDATES = 4
_LEAFSIZE = 64


def point_distance(x, p):
    """Euclidean distance with a fixed evaluation order (shared with the oracle)."""
    diff = x - p
    return np.sqrt((diff * diff).sum(axis=-1))


@dataclass(frozen=True)
class UdfGrid:
    """Per-voxel distance ``d >= 0`` and gradient ``g``, indexed ``[x, y, z]``."""

    geometry: GridGeometry
    d: np.ndarray = field(repr=False)
    g: np.ndarray = field(repr=False)

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if d.shape != self.geometry.shape or g.shape != self.geometry.shape + (3,):
            raise ValueError("UDF arrays do not match the grid geometry")
        if (d < 0).any():
            raise ValueError("UDF values must be non-negative")
        for name, arr in (("d", d), ("g", g)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    @property
    def r(self) -> int:
        return self.geometry.r

    @property
    def spacing(self) -> float:
        return self.geometry.spacing

    def as_voxel_grid(self) -> VoxelGrid:
        """4-channel ``(d, gx, gy, gz)`` view."""
        return VoxelGrid(self.geometry, np.concatenate([self.d[..., None], self.g], axis=-1))


def _nearest_in_tree(points, queries, tree, threads):
    if len(queries) == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    n = len(points)
    k = min(_CANDIDATES, n)
    best_idx = np.empty(len(queries), dtype=np.int64)
    best_d = np.empty(len(queries), dtype=float)
    for start in range(0, len(queries), _CHUNK):
        q = queries[start:start + _CHUNK]
        _, idx = tree.query(q, k=k, workers=threads)
        idx = idx.reshape(len(q), k)
        d = point_distance(q[:, None, :], points[idx])
        dmin = d.min(axis=1)
        tied = d == dmin[:, None]
        chosen = np.where(tied, idx, n).min(axis=1)
        # The k-th candidate tying the minimum means more ties may exist beyond k.
        overflow = np.flatnonzero(tied[:, -1] & (k < n))
        for i in overflow:
            cand = np.asarray(tree.query_ball_point(q[i], dmin[i] * (1 + 1e-9) + 1e-300), dtype=np.int64)
            dc = point_distance(q[i][None, :], points[cand])
            m = dc.min()
            chosen[i] = cand[dc == m].min()
            dmin[i] = m
        best_idx[start:start + len(q)] = chosen
        best_d[start:start + len(q)] = dmin
    return best_idx, best_d


def _box_distance(queries, lo, hi):
    gap = np.maximum(lo - queries, 0.0) + np.maximum(queries - hi, 0.0)
    return np.sqrt((gap * gap).sum(axis=1))


def nearest_samples(points, queries, threads=1, groups=None):
    """Index of and distance to the nearest sample for each query.

    Ties go to the lowest sample index.  ``groups`` optionally splits the
    samples (lists of indices) into separately indexed sets, e.g. one per
    primitive: a single k-d tree over several parallel sheets degrades
    badly for queries equidistant to them.  A group is only searched for
    queries whose distance to its bounding box does not exceed the best
    distance found so far, so the result is the same as a global search.
    """
    points = np.asarray(points, dtype=float)
    queries = np.asarray(queries, dtype=float)
    if groups is None:
        return _nearest_in_tree(points, queries, cKDTree(points, leafsize=_LEAFSIZE), threads)
    groups = [np.asarray(m, dtype=np.int64) for m in groups if len(m)]
    best_idx = np.full(len(queries), len(points), dtype=np.int64)
    best_d = np.full(len(queries), np.inf)
    # Large groups first: they tighten the bound that lets small groups skip queries.
    for members in sorted(groups, key=len, reverse=True):
        sub = points[members]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        bound = _box_distance(queries, lo, hi)
        todo = np.flatnonzero(bound <= best_d * (1.0 + 1e-9))
        if len(todo) == 0:
            continue
        idx, d = _nearest_in_tree(sub, queries[todo], cKDTree(sub, leafsize=_LEAFSIZE), threads)
        idx = members[idx]
        cur_d, cur_i = best_d[todo], best_idx[todo]
        better = (d < cur_d) | ((d == cur_d) & (idx < cur_i))
        best_idx[todo] = np.where(better, idx, cur_i)
        best_d[todo] = np.where(better, d, cur_d)
    return best_idx, best_d


def udf_at(points, queries, threads=1, groups=None):
    """Distance and analytic gradient ``(x - nn(x)) / d`` at arbitrary query points."""
    points = np.asarray(points, dtype=float)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    idx, d = nearest_samples(points, queries, threads, groups)
    g = np.zeros_like(queries)
    pos = d > 0
    g[pos] = (queries[pos] - points[idx[pos]]) / d[pos, None]
    return d, g, idx


def _check_points(points):
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        raise EmptyInput("point set is empty")
    pts = pts.reshape(-1, pts.shape[-1])
    # Normals in columns 3..5 are accepted and ignored.
    return np.ascontiguousarray(pts[:, :3])


def udf_from_points(points, cfg: Config, geometry: GridGeometry = None) -> UdfGrid:
    pts = _check_points(points)
    geometry = geometry or GridGeometry.unit(cfg.r)
    centers = geometry.centers().reshape(-1, 3)
    d, g, _ = udf_at(pts, centers, cfg.threads)
    return UdfGrid(geometry, d.reshape(geometry.shape), g.reshape(geometry.shape + (3,)))


def udf_from_primitive_samples(sample_sets, cfg: Config, geometry: GridGeometry = None):
    """UDF of the union of all samples plus the nearest-primitive label per voxel.

    Ties resolve to the lowest primitive index, then the lowest sample index.
    """
    sets = [np.asarray(s, dtype=float).reshape(-1, 3) for s in sample_sets]
    if not sets:
        raise EmptyInput("no sample sets given")
    for i, s in enumerate(sets):
        if len(s) == 0:
            raise EmptyInput(f"sample set {i} is empty")
    pts = np.concatenate(sets)
    owner = np.concatenate([np.full(len(s), i, dtype=np.int64) for i, s in enumerate(sets)])
    geometry = geometry or GridGeometry.unit(cfg.r)
    centers = geometry.centers().reshape(-1, 3)
    bounds = np.cumsum([0] + [len(s) for s in sets])
    groups = [np.arange(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:])]
    d, g, idx = udf_at(pts, centers, cfg.threads, groups)
    udf = UdfGrid(geometry, d.reshape(geometry.shape), g.reshape(geometry.shape + (3,)))
    labels = LabelGrid(geometry, owner[idx].reshape(geometry.shape), len(sets))
    return udf, labels


def finite_gradient(field_grid) -> VoxelGrid:
    """Central differences inside, one-sided differences on the grid faces."""
    if isinstance(field_grid, VoxelGrid):
        geometry, values = field_grid.geometry, field_grid.values
    else:
        raise TypeError("finite_gradient expects a scalar VoxelGrid")
    if geometry.r < 3:
        raise GridTooSmall(f"finite differences need r >= 3, got {geometry.r}")
    grads = np.gradient(np.asarray(values, dtype=float), geometry.spacing, edge_order=1)
    return VoxelGrid(geometry, np.stack(grads, axis=-1))


def udf_from_distances(geometry: GridGeometry, d) -> UdfGrid:
    """UDF for a distance-only field, with gradients from finite differences."""
    g = finite_gradient(VoxelGrid(geometry, d)).values
    return UdfGrid(geometry, d, g)
