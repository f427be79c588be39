"""Label, boundary and cell grids."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .core import GridGeometry

NONE = -1


def _frozen(arr, dtype):
    arr = np.array(arr, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class LabelGrid:
    """Nearest-primitive index per voxel."""

    geometry: GridGeometry
    labels: np.ndarray = field(repr=False)
    n_primitives: int = 0

    def __post_init__(self):
        lab = _frozen(self.labels, np.int64)
        if lab.shape != self.geometry.shape:
            raise ValueError("label array does not match the grid geometry")
        n = self.n_primitives or (int(lab.max()) + 1 if lab.size else 0)
        if lab.size and (lab.min() < 0 or lab.max() >= n):
            raise ValueError("labels must lie in [0, n_primitives)")
        object.__setattr__(self, "labels", lab)
        object.__setattr__(self, "n_primitives", int(n))


@dataclass(frozen=True)
class BoundaryGrid:
    """Voronoi-boundary probability per voxel; the flag is ``p >= 0.5``."""

    geometry: GridGeometry
    p: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = _frozen(self.p, float)
        if p.shape != self.geometry.shape:
            raise ValueError("probability array does not match the grid geometry")
        if not np.all((p >= 0) & (p <= 1)):
            raise ValueError("boundary probabilities must lie in [0, 1]")
        object.__setattr__(self, "p", p)

    @property
    def flags(self) -> np.ndarray:
        return self.p >= 0.5

    @property
    def count(self) -> int:
        return int(self.flags.sum())

    @classmethod
    def from_flags(cls, geometry, flags) -> "BoundaryGrid":
        return cls(geometry, np.asarray(flags, dtype=bool).astype(float))


@dataclass(frozen=True, eq=False)
class VoronoiCells:
    """Cell id per voxel (``NONE`` on boundary voxels and discarded fragments)."""

    geometry: GridGeometry
    cell_of: np.ndarray = field(repr=False)
    n_cells: int
    adjacency: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        cell_of = _frozen(self.cell_of, np.int64)
        if cell_of.shape != self.geometry.shape:
            raise ValueError("cell array does not match the grid geometry")
        object.__setattr__(self, "cell_of", cell_of)
        adj = self.adjacency
        if adj is None:
            adj = np.zeros((self.n_cells, self.n_cells), dtype=bool)
        object.__setattr__(self, "adjacency", _frozen(adj, bool))

    @cached_property
    def voxel_lists(self) -> list:
        """Flat x-fastest voxel indices of every cell, ascending."""
        flat = self.cell_of.reshape(-1, order="F")
        order = np.argsort(flat, kind="stable")
        sorted_ids = flat[order]
        starts = np.searchsorted(sorted_ids, np.arange(self.n_cells))
        ends = np.searchsorted(sorted_ids, np.arange(self.n_cells), side="right")
        return [order[s:e] for s, e in zip(starts, ends)]

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(v) for v in self.voxel_lists], dtype=np.int64)

    def with_adjacency(self, adjacency) -> "VoronoiCells":
        return VoronoiCells(self.geometry, self.cell_of, self.n_cells, adjacency)
