"""Ground-truth Voronoi boundaries and cells from a nearest-primitive label grid."""

from __future__ import annotations

import numpy as np

from .grids import BoundaryGrid, LabelGrid, VoronoiCells

__all__ = ["LabelGrid", "BoundaryGrid", "boundary_from_labels", "cells_from_labels", "label_pairs"]


def _axis_slices(axis):
    lo = [slice(None)] * 3
    hi = [slice(None)] * 3
    lo[axis] = slice(None, -1)
    hi[axis] = slice(1, None)
    return tuple(lo), tuple(hi)


def boundary_from_labels(labels: LabelGrid) -> BoundaryGrid:
    """Flag both voxels of every 6-adjacent pair whose labels differ."""
    lab = labels.labels
    flags = np.zeros(lab.shape, dtype=bool)
    for axis in range(3):
        lo, hi = _axis_slices(axis)
        diff = lab[lo] != lab[hi]
        flags[lo] |= diff
        flags[hi] |= diff
    return BoundaryGrid.from_flags(labels.geometry, flags)


def label_pairs(ids, ignore=None) -> set:
    """Unordered id pairs ``(a, b), a < b`` sharing a 6-connected voxel face."""
    pairs = set()
    for axis in range(3):
        lo, hi = _axis_slices(axis)
        a, b = ids[lo].ravel(), ids[hi].ravel()
        keep = a != b
        if ignore is not None:
            keep &= (a != ignore) & (b != ignore)
        if not keep.any():
            continue
        ab = np.stack([np.minimum(a[keep], b[keep]), np.maximum(a[keep], b[keep])], axis=1)
        pairs.update(map(tuple, np.unique(ab, axis=0).tolist()))
    return pairs


def cells_from_labels(labels: LabelGrid) -> VoronoiCells:
    """One cell per label present; cells are adjacent iff their labels touch.

    Cell ids follow ascending label value.  Unlike region growing this keeps
    every voxel, boundary or not, and does not require cells to be connected.
    """
    lab = labels.labels
    present = np.unique(lab)
    remap = np.full(labels.n_primitives, -1, dtype=np.int64)
    remap[present] = np.arange(len(present))
    cell_of = remap[lab]
    n = len(present)
    adj = np.zeros((n, n), dtype=bool)
    for a, b in label_pairs(cell_of):
        adj[a, b] = adj[b, a] = True
    return VoronoiCells(labels.geometry, cell_of, n, adj)
