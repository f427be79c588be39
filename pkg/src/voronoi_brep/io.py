"""File formats: binary voxel grids, ASCII point files, brep.json and manifests.

Grid files are little-endian with x-fastest voxel order::

    NVDU  "NVDU" u32 version u32 r  3*f64 origin  f64 spacing  r^3 * (f32 d, gx, gy, gz)
    NVDB  "NVDB" u32 version u32 r  r^3 * f32 probability
    NVDL  "NVDL" u32 version u32 r  r^3 * u32 label   (0xFFFFFFFF = no label)
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .brep import MATRICES, BRepModel
from .core import Config, GridGeometry, Normalization
from .errors import (EmptyInput, MalformedFile, ManifestError, ParseError, ResolutionMismatch, SchemaMismatch,
                     ValueOutOfRange)
from .grids import NONE, BoundaryGrid, LabelGrid, VoronoiCells
from .primitives import primitive_from_dict
from .udf import UdfGrid

GRID_VERSION = 1
NO_LABEL = 0xFFFFFFFF
BREP_SCHEMA = "voronoi-brep/brep"
EVAL_SCHEMA = "voronoi-brep/eval"
SCHEMA_VERSION = 1

_HEAD = struct.Struct("<4sII")
_UDF_GEOM = struct.Struct("<3dd")


def _header(magic: bytes, r: int) -> bytes:
    return _HEAD.pack(magic, GRID_VERSION, r)


def _read_header(buf: bytes, magic: bytes, path) -> int:
    if len(buf) < _HEAD.size:
        raise MalformedFile(f"{path}: file too short for a header")
    got, version, r = _HEAD.unpack_from(buf)
    if got != magic:
        raise MalformedFile(f"{path}: bad magic {got!r}, expected {magic!r}")
    if version != GRID_VERSION:
        raise MalformedFile(f"{path}: unsupported version {version}")
    if r == 0:
        raise MalformedFile(f"{path}: zero resolution")
    return r


def _payload(buf, offset, count, dtype, path):
    need = offset + count * np.dtype(dtype).itemsize
    if len(buf) != need:
        raise MalformedFile(f"{path}: expected {need} bytes, found {len(buf)}")
    return np.frombuffer(buf, dtype=dtype, count=count, offset=offset)


def _flat(arr):
    """x-fastest flattening of an ``[x, y, z, ...]`` array."""
    if arr.ndim == 3:
        return arr.ravel(order="F")
    return arr.transpose(2, 1, 0, 3).reshape(-1, arr.shape[-1])


def _unflat(flat, r):
    return flat.reshape((r, r, r), order="F")


def write_nvdu(path, udf: UdfGrid) -> None:
    geo = udf.geometry
    rec = np.empty((geo.size, 4), dtype="<f4")
    rec[:, 0] = _flat(udf.d)
    rec[:, 1:] = _flat(udf.g)
    with open(path, "wb") as fh:
        fh.write(_header(b"NVDU", geo.r))
        fh.write(_UDF_GEOM.pack(*geo.origin, geo.spacing))
        fh.write(rec.tobytes())


def read_nvdu(path) -> UdfGrid:
    buf = Path(path).read_bytes()
    r = _read_header(buf, b"NVDU", path)
    if len(buf) < _HEAD.size + _UDF_GEOM.size:
        raise MalformedFile(f"{path}: truncated geometry block")
    ox, oy, oz, spacing = _UDF_GEOM.unpack_from(buf, _HEAD.size)
    rec = _payload(buf, _HEAD.size + _UDF_GEOM.size, 4 * r ** 3, "<f4", path).reshape(-1, 4).astype(float)
    if not np.all(np.isfinite(rec)) or (rec[:, 0] < 0).any():
        raise ValueOutOfRange(f"{path}: distances must be finite and non-negative")
    geo = GridGeometry(r, (ox, oy, oz), spacing)
    g = np.stack([_unflat(rec[:, k], r) for k in (1, 2, 3)], axis=-1)
    return UdfGrid(geo, _unflat(rec[:, 0], r), g)


def write_nvdb(path, boundary: BoundaryGrid) -> None:
    with open(path, "wb") as fh:
        fh.write(_header(b"NVDB", boundary.geometry.r))
        fh.write(_flat(boundary.p).astype("<f4").tobytes())


def read_nvdb(path, expected_r: int = None, geometry: GridGeometry = None) -> BoundaryGrid:
    """Boundary probabilities; values outside ``[0, 1]`` are rejected."""
    buf = Path(path).read_bytes()
    r = _read_header(buf, b"NVDB", path)
    if expected_r is not None and r != expected_r:
        raise ResolutionMismatch(f"{path}: resolution {r}, expected {expected_r}")
    p = _payload(buf, _HEAD.size, r ** 3, "<f4", path).astype(float)
    bad = ~((p >= 0) & (p <= 1))
    if bad.any():
        raise ValueOutOfRange(f"{path}: {int(bad.sum())} probabilities outside [0, 1]")
    return BoundaryGrid(geometry or GridGeometry.unit(r), _unflat(p, r))


def _write_labels(path, r, labels):
    out = np.where(labels == NONE, NO_LABEL, labels).astype("<u4")
    with open(path, "wb") as fh:
        fh.write(_header(b"NVDL", r))
        fh.write(_flat(out).tobytes())


def write_nvdl(path, grid) -> None:
    """Write a ``LabelGrid`` or the cell ids of ``VoronoiCells``."""
    arr = grid.labels if isinstance(grid, LabelGrid) else grid.cell_of
    _write_labels(path, grid.geometry.r, arr)


def read_nvdl_raw(path) -> np.ndarray:
    """Label array with ``NONE`` for unlabeled voxels."""
    buf = Path(path).read_bytes()
    r = _read_header(buf, b"NVDL", path)
    raw = _payload(buf, _HEAD.size, r ** 3, "<u4", path)
    lab = np.where(raw == NO_LABEL, NONE, raw.astype(np.int64))
    return _unflat(lab, r)


def read_nvdl(path, geometry: GridGeometry = None) -> LabelGrid:
    lab = read_nvdl_raw(path)
    if (lab == NONE).any():
        raise ValueOutOfRange(f"{path}: a primitive label grid may not contain unlabeled voxels")
    return LabelGrid(geometry or GridGeometry.unit(lab.shape[0]), lab)


def read_cells(path, geometry: GridGeometry = None) -> VoronoiCells:
    cell_of = read_nvdl_raw(path)
    n = int(cell_of.max()) + 1 if (cell_of != NONE).any() else 0
    return VoronoiCells(geometry or GridGeometry.unit(cell_of.shape[0]), cell_of, n)


def read_points(path):
    """Parse ``x y z`` or ``x y z nx ny nz`` lines; returns ``(points, normals or None)``.

    Blank lines and ``#`` comments are skipped.  All data lines must have the
    same arity.
    """
    pts, nrm, arity = [], [], None
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) not in (3, 6):
                raise ParseError(f"{path}: expected 3 or 6 numbers, found {len(parts)}", lineno)
            if arity is None:
                arity = len(parts)
            elif len(parts) != arity:
                raise ParseError(f"{path}: mixed 3- and 6-column lines", lineno)
            try:
                vals = [float(p) for p in parts]
            except ValueError:
                raise ParseError(f"{path}: non-numeric value in {text!r}", lineno) from None
            if not all(np.isfinite(vals)):
                raise ParseError(f"{path}: non-finite value in {text!r}", lineno)
            pts.append(vals[:3])
            if arity == 6:
                nrm.append(vals[3:])
    points = np.asarray(pts, dtype=float).reshape(-1, 3)
    normals = np.asarray(nrm, dtype=float).reshape(-1, 3) if arity == 6 else None
    return points, normals


def write_points(path, points, normals=None) -> None:
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    data = pts if normals is None else np.hstack([pts, np.asarray(normals, dtype=float).reshape(-1, 3)])
    np.savetxt(path, data, fmt="%.17g")


def _pairs(m, upper=False):
    idx = np.argwhere(m)
    if upper:
        idx = idx[idx[:, 0] < idx[:, 1]]
    return idx.tolist()


def _from_pairs(pairs, shape, symmetric=False, name=""):
    m = np.zeros(shape, dtype=bool)
    for pair in pairs:
        if len(pair) != 2:
            raise SchemaMismatch(f"{name}: entries must be index pairs")
        i, j = int(pair[0]), int(pair[1])
        if not (0 <= i < shape[0] and 0 <= j < shape[1]):
            raise SchemaMismatch(f"{name}: index pair ({i}, {j}) outside {shape}")
        m[i, j] = True
        if symmetric:
            m[j, i] = True
    return m


def _clean(x):
    """JSON-ready copy: numpy scalars to Python, -0.0 to 0.0."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return float(x) + 0.0
    return x


def brep_to_dict(model: BRepModel) -> dict:
    nf, ne, nv = model.n_surfaces, model.n_curves, model.n_vertices
    return _clean({
        "schema": BREP_SCHEMA,
        "version": SCHEMA_VERSION,
        "counts": {"vertices": nv, "curves": ne, "surfaces": nf},
        "vertices": model.vertices.tolist(),
        "curves": [dict(c.to_dict(), meta=m) for c, m in zip(model.curves, model.curve_meta)],
        "surfaces": [dict(s.to_dict(), meta=m) for s, m in zip(model.surfaces, model.surface_meta)],
        "matrices": {
            "FF": _pairs(model.FF, upper=True),
            "FE": _pairs(model.FE),
            "EE": _pairs(model.EE, upper=True),
            "EV": _pairs(model.EV),
            "FV": _pairs(model.FV),
        },
        "warnings": list(model.warnings),
        "normalization": model.normalization.to_dict() if model.normalization else None,
    })


def _check_schema(d, schema, path):
    if not isinstance(d, dict) or d.get("schema") != schema:
        raise SchemaMismatch(f"{path}: not a {schema} document")
    if d.get("version") != SCHEMA_VERSION:
        raise SchemaMismatch(f"{path}: {schema} version {d.get('version')!r} is not {SCHEMA_VERSION}")


def brep_from_dict(d: dict, source="<dict>") -> BRepModel:
    _check_schema(d, BREP_SCHEMA, source)
    try:
        curves, curve_meta = [], []
        for rec in d["curves"]:
            rec = dict(rec)
            curve_meta.append(rec.pop("meta", {}))
            curves.append(primitive_from_dict(rec))
        surfaces, surface_meta = [], []
        for rec in d["surfaces"]:
            rec = dict(rec)
            surface_meta.append(rec.pop("meta", {}))
            surfaces.append(primitive_from_dict(rec))
        V = np.asarray(d["vertices"], dtype=float).reshape(-1, 3)
        mats = d["matrices"]
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaMismatch(f"{source}: {exc}") from None
    nf, ne, nv = len(surfaces), len(curves), len(V)
    shapes = {"FF": (nf, nf), "FE": (nf, ne), "EE": (ne, ne), "EV": (ne, nv), "FV": (nf, nv)}
    m = {k: _from_pairs(mats.get(k, []), shapes[k], k in ("FF", "EE"), k) for k in MATRICES}
    norm = d.get("normalization")
    return BRepModel(
        V, curves, surfaces, m["FF"], m["FE"], m["EE"], m["EV"], m["FV"],
        surface_meta=surface_meta,
        curve_meta=curve_meta,
        warnings=list(d.get("warnings", [])),
        normalization=Normalization.from_dict(norm) if norm else None,
    )


def dumps(obj) -> str:
    """Canonical JSON text: sorted keys, fixed indentation, trailing newline."""
    return json.dumps(_clean(obj), sort_keys=True, indent=1) + "\n"


def write_json(path, obj) -> None:
    Path(path).write_text(dumps(obj))


def read_json(path):
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc.msg}", exc.lineno) from None


def write_brep(path, model: BRepModel) -> None:
    write_json(path, brep_to_dict(model))


def read_brep(path) -> BRepModel:
    return brep_from_dict(read_json(path), path)


# Manifests ------------------------------------------------------------------

INPUT_KINDS = ("points", "samples", "udf-grid")
BOUNDARY_SOURCES = ("analytic", "external", "labels")


def _resolve(base: Path, p):
    p = Path(os.path.expanduser(str(p)))
    return p if p.is_absolute() else base / p


def config_from_overrides(overrides: dict, base: Config = None) -> Config:
    base = base or Config()
    if not overrides:
        return base
    known = set(base.__dataclass_fields__)
    unknown = sorted(set(overrides) - known)
    if unknown:
        raise ManifestError(f"unknown config fields: {', '.join(unknown)}")
    vals = dict(overrides)
    if "match_thresholds" in vals:
        vals["match_thresholds"] = tuple(vals["match_thresholds"])
    try:
        return base.replace(**vals)
    except (TypeError, ValueError) as exc:
        raise ManifestError(f"invalid config override: {exc}") from None


@dataclass
class PipelineManifest:
    """What to reconstruct and how.

    ``input_kind`` is ``points`` (one point file), ``samples`` (one point file
    per primitive, enabling ground-truth labels) or ``udf-grid`` (an NVDU
    file).  Exactly one boundary source is selected: the analytic detector,
    an external NVDB probability grid, or ground-truth labels (an NVDL file,
    or computed from ``samples`` input when no path is given).
    """

    input_kind: str
    inputs: list
    boundary: str = "analytic"
    boundary_path: Path = None
    output: Path = Path("out")
    config: dict = field(default_factory=dict)
    tiled: bool = False
    refine: bool = True
    use_input_points: bool = False
    normalize: float = None

    def validate(self) -> "PipelineManifest":
        if self.input_kind not in INPUT_KINDS:
            raise ManifestError(f"input kind must be one of {INPUT_KINDS}, got {self.input_kind!r}")
        if not self.inputs:
            raise ManifestError("manifest lists no input files")
        if self.input_kind in ("points", "udf-grid") and len(self.inputs) != 1:
            raise ManifestError(f"{self.input_kind} input takes exactly one file")
        if self.boundary not in BOUNDARY_SOURCES:
            raise ManifestError(f"boundary source must be one of {BOUNDARY_SOURCES}, got {self.boundary!r}")
        if self.boundary == "external" and self.boundary_path is None:
            raise ManifestError("external boundary source needs a path")
        if self.boundary == "labels" and self.boundary_path is None and self.input_kind != "samples":
            raise ManifestError("ground-truth labels need a label file or per-primitive samples")
        if self.boundary == "analytic" and self.boundary_path is not None:
            raise ManifestError("the analytic detector takes no boundary path")
        return self


def parse_manifest(d: dict, base_dir=".") -> PipelineManifest:
    base = Path(base_dir)
    if not isinstance(d, dict):
        raise ManifestError("manifest must be a JSON object")
    inp = d.get("input")
    if not isinstance(inp, dict):
        raise ManifestError("manifest needs an 'input' object")
    paths = inp.get("paths", [inp["path"]] if "path" in inp else [])
    bsrc = d.get("boundary", {"source": "analytic"})
    if isinstance(bsrc, str):
        bsrc = {"source": bsrc}
    selected = [k for k in ("analytic", "external", "labels") if bsrc.get(k)]
    if selected and "source" in bsrc:
        raise ManifestError("give either 'source' or one boundary key, not both")
    if len(selected) > 1:
        raise ManifestError(f"exactly one boundary source may be selected, got {selected}")
    if selected:
        source = selected[0]
        value = bsrc[source]
        bpath = None if value is True else value
    else:
        source = bsrc.get("source", "analytic")
        bpath = bsrc.get("path")
    stages = d.get("stages", {})
    m = PipelineManifest(
        input_kind=inp.get("kind", "points"),
        inputs=[_resolve(base, p) for p in paths],
        boundary=source,
        boundary_path=_resolve(base, bpath) if bpath else None,
        output=_resolve(base, d.get("output", "out")),
        config=dict(d.get("config", {})),
        tiled=bool(stages.get("tiled", False)),
        refine=bool(stages.get("fill_holes", True)),
        use_input_points=bool(stages.get("input_points", False)),
        normalize=stages.get("normalize"),
    )
    return m.validate()


def read_manifest(path) -> PipelineManifest:
    path = Path(path)
    return parse_manifest(read_json(path), path.parent)


def read_sample_manifest(path) -> list:
    """Per-primitive sample files listed under ``samples`` (paths relative to the manifest)."""
    path = Path(path)
    d = read_json(path)
    files = d.get("samples") if isinstance(d, dict) else None
    if not files:
        raise ManifestError(f"{path}: expected a non-empty 'samples' list")
    sets = []
    for f in files:
        pts, _ = read_points(_resolve(path.parent, f))
        if len(pts) == 0:
            raise EmptyInput(f"{f}: no points")
        sets.append(pts)
    return sets
