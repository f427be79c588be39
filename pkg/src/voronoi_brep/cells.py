"""Voronoi cells from a boundary grid: hole filling, region growing,
adjacency, and the point sets each cell contributes to fitting."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import Config
from .errors import NoCells, ResolutionMismatch
from .grids import NONE, BoundaryGrid, VoronoiCells
from .udf import UdfGrid

_CHUNK = 1 << 17


def _ball_offsets(radius: float):
    """Integer offsets within a Euclidean ball, sorted by (distance, x-fastest index)."""
    rng = int(np.floor(radius))
    out = []
    for dz in range(-rng, rng + 1):
        for dy in range(-rng, rng + 1):
            for dx in range(-rng, rng + 1):
                if dx * dx + dy * dy + dz * dz <= radius * radius:
                    out.append((dx, dy, dz))
    return np.array(out, dtype=np.int64)


_BALL2 = _ball_offsets(2.0)


def _check_same_grid(a, b):
    if a.geometry.r != b.geometry.r:
        raise ResolutionMismatch(f"grids have r={a.geometry.r} and r={b.geometry.r}")


def fill_holes(boundary: BoundaryGrid, udf: UdfGrid, cfg: Config = None) -> BoundaryGrid:
    """Close gaps in the boundary by voting along the UDF gradient.

    Every non-boundary voxel with ``d <= d_max`` samples the voxels one, two,
    ..., L spacings away along ``+g`` and ``-g``.  If half or more of the
    in-grid samples are boundary voxels it becomes boundary too.  One pass,
    reading the old flags only.
    """
    cfg = cfg or Config(r=udf.r)
    _check_same_grid(boundary, udf)
    r = udf.r
    flags = boundary.flags
    gnorm = np.linalg.norm(udf.g, axis=-1)
    cand = np.argwhere(~flags & (udf.d <= cfg.d_max) & (gnorm > 0))
    steps = np.concatenate([np.arange(1, cfg.hole_fill_steps + 1), -np.arange(1, cfg.hole_fill_steps + 1)])
    new_flags = flags.copy()
    for start in range(0, len(cand), _CHUNK):
        idx = cand[start:start + _CHUNK]
        sel = tuple(idx.T)
        ghat = udf.g[sel] / gnorm[sel][:, None]
        # In index units one spacing is one voxel; centers sit at integer + 0.5.
        pos = idx[:, None, :] + 0.5 + steps[None, :, None] * ghat[:, None, :]
        vox = np.floor(pos).astype(np.int64)
        inside = np.all((vox >= 0) & (vox < r), axis=-1)
        vox = np.clip(vox, 0, r - 1)
        hit = flags[vox[..., 0], vox[..., 1], vox[..., 2]] & inside
        total = inside.sum(axis=1)
        count = hit.sum(axis=1)
        fill = (total > 0) & (2 * count >= total)
        new_flags[tuple(idx[fill].T)] = True
    p = np.where(new_flags & ~flags, 1.0, boundary.p)
    return BoundaryGrid(boundary.geometry, p)


def _flat_index(shape):
    r = shape[0]
    x, y, z = np.indices(shape)
    return x + r * (y + r * z)


def grow_regions(boundary: BoundaryGrid, min_cell_voxels: int = 8) -> VoronoiCells:
    """Connected components (6-connectivity) of the non-boundary voxels.

    Cell ids follow the smallest x-fastest voxel index in each component, so
    the labeling does not depend on traversal order.  Components smaller
    than ``min_cell_voxels`` are dropped to ``NONE``.
    """
    free = ~boundary.flags
    if not free.any():
        raise NoCells("every voxel is a boundary voxel")
    structure = ndimage.generate_binary_structure(3, 1)
    raw, n = ndimage.label(free, structure=structure)
    flat = _flat_index(free.shape)
    ids = np.arange(1, n + 1)
    first = ndimage.minimum(flat, labels=raw, index=ids).astype(np.int64)
    sizes = ndimage.sum_labels(np.ones(free.shape), labels=raw, index=ids).astype(np.int64)
    keep = sizes >= min_cell_voxels
    order = np.argsort(first[keep], kind="stable")
    remap = np.full(n + 1, NONE, dtype=np.int64)
    remap[ids[keep][order]] = np.arange(int(keep.sum()))
    cell_of = remap[raw]
    n_cells = int(keep.sum())
    if n_cells == 0:
        raise NoCells(f"no component reaches {min_cell_voxels} voxels")
    return VoronoiCells(boundary.geometry, cell_of, n_cells)


def _shifted(arr, offset, fill):
    """``out[c] = arr[c + offset]`` with ``fill`` outside the grid."""
    out = np.full_like(arr, fill)
    src, dst = [], []
    for o, n in zip(offset, arr.shape):
        o = int(o)
        if o >= 0:
            src.append(slice(o, n))
            dst.append(slice(0, n - o))
        else:
            src.append(slice(0, n + o))
            dst.append(slice(-o, n))
    out[tuple(dst)] = arr[tuple(src)]
    return out


# Straight-line reach across a boundary up to two voxels thick.
_AXIS_REACH = np.array(
    [(0, 0, 0)] + [tuple(s * k * np.eye(3, dtype=np.int64)[a]) for a in range(3) for s in (-1, 1) for k in (1, 2)],
    dtype=np.int64,
)


def cell_adjacency(cells: VoronoiCells, boundary: BoundaryGrid) -> np.ndarray:
    """Symmetric cell adjacency.

    Two cells are adjacent if a boundary voxel sees both of them within two
    voxels along the grid axes (bridging a boundary two voxels thick), or if
    they touch face to face.
    """
    _check_same_grid(cells, boundary)
    n = cells.n_cells
    adj = np.zeros((n, n), dtype=bool)
    cell_of = cells.cell_of
    bvox = np.argwhere(boundary.flags)
    if len(bvox):
        cols = []
        for off in _AXIS_REACH:
            cols.append(_shifted(cell_of, off, NONE)[tuple(bvox.T)])
        seen = np.sort(np.stack(cols, axis=1), axis=1)
        seen = np.unique(seen, axis=0)
        for row in seen:
            present = np.unique(row[row != NONE])
            for i in range(len(present)):
                for j in range(i + 1, len(present)):
                    adj[present[i], present[j]] = True
    for axis in range(3):
        a = np.moveaxis(cell_of, axis, 0)
        lo, hi = a[:-1].ravel(), a[1:].ravel()
        m = (lo != hi) & (lo != NONE) & (hi != NONE)
        adj[lo[m], hi[m]] = True
    adj |= adj.T
    np.fill_diagonal(adj, False)
    return adj


@dataclass(frozen=True, eq=False)
class CellPoints:
    """Per-cell surface points and where they came from (``input`` or ``projected``)."""

    points: list = field(repr=False)
    source: str
    spacing: float

    def __len__(self):
        return len(self.points)

    def is_degenerate(self, i: int) -> bool:
        """Empty, or too small in extent (bbox diagonal below three voxels) to fit."""
        pts = self.points[i]
        if len(pts) == 0:
            return True
        diag = float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))
        return diag < 3.0 * self.spacing

    @property
    def counts(self) -> list:
        return [len(p) for p in self.points]


def _projected_points(cells: VoronoiCells, udf: UdfGrid):
    geo = udf.geometry
    centers = geo.centers()
    near = udf.d <= 2.0 * geo.spacing
    out = []
    flat_d = udf.d.reshape(-1, order="F")
    flat_near = near.reshape(-1, order="F")
    flat_c = centers.reshape(-1, 3, order="F")
    flat_g = udf.g.reshape(-1, 3, order="F")
    for vox in cells.voxel_lists:
        v = vox[flat_near[vox]]
        proj = flat_c[v] - flat_d[v][:, None] * flat_g[v]
        if len(proj):
            proj = np.unique(proj, axis=0)
        out.append(proj.reshape(-1, 3))
    return out


def _input_points(cells: VoronoiCells, points):
    geo = cells.geometry
    r = geo.r
    pts = np.asarray(points, dtype=float)[:, :3]
    vox = geo.voxel_of(pts)
    inside = np.all((vox >= 0) & (vox < r), axis=1)
    owner = np.full(len(pts), NONE, dtype=np.int64)
    iv = vox[inside]
    owner[inside] = cells.cell_of[tuple(iv.T)]
    # Points in boundary voxels go to the nearest cell voxel within two voxels.
    lost = np.flatnonzero(inside & (owner == NONE))
    if len(lost):
        cont = geo.to_continuous(pts[lost])
        best = np.full(len(lost), np.inf)
        best_cell = np.full(len(lost), NONE, dtype=np.int64)
        best_flat = np.full(len(lost), np.iinfo(np.int64).max)
        for off in _BALL2:
            nb = vox[lost] + off
            ok = np.all((nb >= 0) & (nb < r), axis=1)
            nbc = np.clip(nb, 0, r - 1)
            cid = np.where(ok, cells.cell_of[tuple(nbc.T)], NONE)
            dist = np.linalg.norm(cont - nbc, axis=1)
            flat = nbc[:, 0] + r * (nbc[:, 1] + r * nbc[:, 2])
            better = (cid != NONE) & ((dist < best) | ((dist == best) & (flat < best_flat)))
            best = np.where(better, dist, best)
            best_cell = np.where(better, cid, best_cell)
            best_flat = np.where(better, flat, best_flat)
        owner[lost] = best_cell
    out = []
    order = np.argsort(owner, kind="stable")
    sorted_owner = owner[order]
    for i in range(cells.n_cells):
        lo, hi = np.searchsorted(sorted_owner, [i, i + 1])
        out.append(pts[order[lo:hi]])
    return out


def assign_points(cells: VoronoiCells, udf: UdfGrid, input_points=None) -> CellPoints:
    """Surface points per cell.

    With ``input_points`` every point joins the cell of its containing voxel;
    otherwise cell voxels within two spacings of the surface contribute
    their projection ``x - d * g`` onto it.
    """
    _check_same_grid(cells, udf)
    if input_points is not None and len(input_points):
        return CellPoints(_input_points(cells, input_points), "input", udf.spacing)
    return CellPoints(_projected_points(cells, udf), "projected", udf.spacing)


def build_cells(boundary: BoundaryGrid, udf: UdfGrid, cfg: Config, refine: bool = True) -> VoronoiCells:
    """Hole filling (optional), region growing and adjacency in one call."""
    if refine:
        boundary = fill_holes(boundary, udf, cfg)
    cells = grow_regions(boundary, cfg.min_cell_voxels)
    return cells.with_adjacency(cell_adjacency(cells, boundary))
