"""The B-Rep model: primitives plus boolean adjacency between them."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Normalization
from .errors import InconsistentTopology

MATRICES = ("FF", "FE", "EE", "EV", "FV")


def _bool_matrix(m, shape):
    if m is None:
        return np.zeros(shape, dtype=bool)
    m = np.asarray(m, dtype=bool)
    if m.size == 0:
        return np.zeros(shape, dtype=bool)
    return m.copy()


@dataclass(eq=False)
class BRepModel:
    """Vertices, curves and surfaces with their FF/FE/EE/EV/FV incidence.

    ``surface_meta`` and ``curve_meta`` carry per-primitive bookkeeping such
    as fit residual, source cell and the bounding box (``extent``) used to
    clip unbounded primitives when sampling them.
    """

    vertices: np.ndarray
    curves: list
    surfaces: list
    FF: np.ndarray = None
    FE: np.ndarray = None
    EE: np.ndarray = None
    EV: np.ndarray = None
    FV: np.ndarray = None
    surface_meta: list = None
    curve_meta: list = None
    warnings: list = field(default_factory=list)
    normalization: Optional[Normalization] = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        self.curves = list(self.curves)
        self.surfaces = list(self.surfaces)
        nf, ne, nv = self.n_surfaces, self.n_curves, self.n_vertices
        shapes = {"FF": (nf, nf), "FE": (nf, ne), "EE": (ne, ne), "EV": (ne, nv), "FV": (nf, nv)}
        for name, shape in shapes.items():
            setattr(self, name, _bool_matrix(getattr(self, name), shape))
        if self.surface_meta is None:
            self.surface_meta = [{} for _ in self.surfaces]
        if self.curve_meta is None:
            self.curve_meta = [{} for _ in self.curves]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_curves(self) -> int:
        return len(self.curves)

    @property
    def n_surfaces(self) -> int:
        return len(self.surfaces)

    @property
    def counts(self):
        return self.n_vertices, self.n_curves, self.n_surfaces

    @property
    def euler(self) -> int:
        return self.n_vertices - self.n_curves + self.n_surfaces

    def extent_of(self, kind: str, i: int):
        meta = self.surface_meta if kind == "surface" else self.curve_meta
        ext = meta[i].get("extent") if i < len(meta) else None
        return None if ext is None else np.asarray(ext, dtype=float)

    def violations(self, eps3: float = None) -> list:
        """Human-readable list of broken invariants (empty when valid)."""
        out = []
        nf, ne, nv = self.n_surfaces, self.n_curves, self.n_vertices
        expected = {"FF": (nf, nf), "FE": (nf, ne), "EE": (ne, ne), "EV": (ne, nv), "FV": (nf, nv)}
        for name, shape in expected.items():
            m = getattr(self, name)
            if m.shape != shape:
                out.append(f"{name} has shape {m.shape}, expected {shape}")
        if out:
            return out
        for name in ("FF", "EE"):
            m = getattr(self, name)
            for i, j in np.argwhere(m != m.T):
                if i < j:
                    out.append(f"{name}[{i},{j}] is not symmetric")
            for i in np.flatnonzero(np.diag(m)):
                out.append(f"{name}[{i},{i}] is set on the diagonal")
        if len(self.surface_meta) != nf or len(self.curve_meta) != ne:
            out.append("metadata lists do not match primitive counts")
        if eps3 is not None and nv and ne:
            for e, v in np.argwhere(self.EV):
                gap = float(self.curves[e].distance(self.vertices[v])[0])
                if gap > eps3:
                    out.append(f"EV[{e},{v}]: vertex is {gap:.4g} from its curve")
        return out

    def validate(self, eps3: float = None) -> "BRepModel":
        bad = self.violations(eps3)
        if bad:
            raise InconsistentTopology(bad)
        return self

    def derived_fv(self) -> np.ndarray:
        """FV implied by FE and EV."""
        return (self.FE.astype(np.int64) @ self.EV.astype(np.int64)) > 0

    @classmethod
    def empty(cls) -> "BRepModel":
        return cls(np.zeros((0, 3)), [], [])
