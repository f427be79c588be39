import json
import struct

import numpy as np
import pytest

from oracles import cube_model
from voronoi_brep import io
from voronoi_brep.core import Config, GridGeometry, Normalization
from voronoi_brep.errors import MalformedFile, ManifestError, ParseError, ResolutionMismatch, SchemaMismatch, ValueOutOfRange
from voronoi_brep.grids import NONE, BoundaryGrid, LabelGrid, VoronoiCells
from voronoi_brep.udf import UdfGrid


def _udf(r=4, seed=0):
    rng = np.random.default_rng(seed)
    d = rng.random((r, r, r)).astype(np.float32).astype(float)
    g = rng.normal(size=(r, r, r, 3)).astype(np.float32).astype(float)
    return UdfGrid(GridGeometry(r, (-0.5, 0.0, 0.25), 0.125), d, g)


def test_nvdu_layout_by_hand(tmp_path):
    udf = _udf(2)
    io.write_nvdu(tmp_path / "a.nvdu", udf)
    buf = (tmp_path / "a.nvdu").read_bytes()
    assert buf[:4] == b"NVDU"
    assert struct.unpack_from("<II", buf, 4) == (1, 2)
    assert struct.unpack_from("<4d", buf, 12) == (-0.5, 0.0, 0.25, 0.125)
    rec = np.frombuffer(buf, "<f4", offset=44).reshape(-1, 4)
    # Record k holds voxel (x, y, z) with k = x + 2 y + 4 z.
    for z in range(2):
        for y in range(2):
            for x in range(2):
                k = x + 2 * y + 4 * z
                assert rec[k, 0] == np.float32(udf.d[x, y, z])
                assert tuple(rec[k, 1:]) == tuple(np.float32(udf.g[x, y, z]))


def test_nvdu_round_trip_bit_identical(tmp_path):
    udf = _udf(5)
    io.write_nvdu(tmp_path / "a.nvdu", udf)
    back = io.read_nvdu(tmp_path / "a.nvdu")
    assert np.array_equal(back.d, udf.d) and np.array_equal(back.g, udf.g)
    assert back.geometry == udf.geometry
    io.write_nvdu(tmp_path / "b.nvdu", back)
    assert (tmp_path / "a.nvdu").read_bytes() == (tmp_path / "b.nvdu").read_bytes()


def test_nvdb_round_trip(tmp_path):
    p = np.random.default_rng(1).random((6, 6, 6)).astype(np.float32).astype(float)
    b = BoundaryGrid(GridGeometry.unit(6), p)
    io.write_nvdb(tmp_path / "b.nvdb", b)
    back = io.read_nvdb(tmp_path / "b.nvdb")
    assert np.array_equal(back.p, p)
    assert len((tmp_path / "b.nvdb").read_bytes()) == 12 + 4 * 216


def test_nvdb_rejects_out_of_range_and_wrong_resolution(tmp_path):
    path = tmp_path / "b.nvdb"
    path.write_bytes(struct.pack("<4sII", b"NVDB", 1, 2) + np.full(8, 1.5, "<f4").tobytes())
    with pytest.raises(ValueOutOfRange):
        io.read_nvdb(path)
    io.write_nvdb(path, BoundaryGrid(GridGeometry.unit(2), np.zeros((2, 2, 2))))
    with pytest.raises(ResolutionMismatch):
        io.read_nvdb(path, expected_r=4)


def test_nvdl_round_trip_with_unlabeled(tmp_path):
    cell_of = np.random.default_rng(2).integers(0, 5, (4, 4, 4))
    cell_of[0, 1, 2] = NONE
    cells = VoronoiCells(GridGeometry.unit(4), cell_of, 5)
    io.write_nvdl(tmp_path / "c.nvdl", cells)
    assert np.array_equal(io.read_cells(tmp_path / "c.nvdl").cell_of, cell_of)
    raw = np.frombuffer((tmp_path / "c.nvdl").read_bytes(), "<u4", offset=12)
    assert raw[0 + 4 * 1 + 16 * 2] == 0xFFFFFFFF
    with pytest.raises(ValueOutOfRange):
        io.read_nvdl(tmp_path / "c.nvdl")


def test_label_grid_round_trip(tmp_path):
    lab = np.random.default_rng(3).integers(0, 3, (4, 4, 4))
    io.write_nvdl(tmp_path / "l.nvdl", LabelGrid(GridGeometry.unit(4), lab, 3))
    assert np.array_equal(io.read_nvdl(tmp_path / "l.nvdl").labels, lab)


@pytest.mark.parametrize("blob", [b"", b"NVDU", b"XXXX\x01\x00\x00\x00\x02\x00\x00\x00",
                                  struct.pack("<4sII", b"NVDU", 2, 2), struct.pack("<4sII", b"NVDU", 1, 0)])
def test_malformed_grid_headers(tmp_path, blob):
    (tmp_path / "x").write_bytes(blob)
    with pytest.raises(MalformedFile):
        io.read_nvdu(tmp_path / "x")


def test_truncated_payload(tmp_path):
    io.write_nvdu(tmp_path / "a.nvdu", _udf(3))
    buf = (tmp_path / "a.nvdu").read_bytes()
    (tmp_path / "a.nvdu").write_bytes(buf[:-4])
    with pytest.raises(MalformedFile):
        io.read_nvdu(tmp_path / "a.nvdu")


# Point files.

def test_points_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    pts, nrm = rng.random((20, 3)), rng.normal(size=(20, 3))
    io.write_points(tmp_path / "p.xyz", pts)
    back, n = io.read_points(tmp_path / "p.xyz")
    assert n is None and np.array_equal(back, pts)
    io.write_points(tmp_path / "q.xyz", pts, nrm)
    back, n = io.read_points(tmp_path / "q.xyz")
    assert np.array_equal(back, pts) and np.array_equal(n, nrm)


def test_points_comments_and_blank_lines(tmp_path):
    (tmp_path / "p.xyz").write_text("# header\n\n0 0 0\n1 2 3  # trailing\n")
    pts, _ = io.read_points(tmp_path / "p.xyz")
    assert pts.tolist() == [[0, 0, 0], [1, 2, 3]]


@pytest.mark.parametrize("text, line", [("0 0 0\na b\n", 2), ("0 0 0\n1 2\n", 2), ("# c\n0 0 nan\n", 2),
                                        ("0 0 0\n0 0 0 1 0 0\n", 2), ("1 2 3 4\n", 1)])
def test_point_parse_errors_carry_line(tmp_path, text, line):
    (tmp_path / "p.xyz").write_text(text)
    with pytest.raises(ParseError) as err:
        io.read_points(tmp_path / "p.xyz")
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


# brep.json.

def test_brep_round_trip(tmp_path):
    m = cube_model()
    m.normalization = Normalization(2.0, (0.1, 0.2, 0.3))
    m.warnings = ["example warning"]
    io.write_brep(tmp_path / "m.json", m)
    back = io.read_brep(tmp_path / "m.json")
    assert back.counts == m.counts
    assert back.surfaces == m.surfaces and back.curves == m.curves
    assert np.array_equal(back.vertices, m.vertices)
    for name in ("FF", "FE", "EE", "EV", "FV"):
        assert np.array_equal(getattr(back, name), getattr(m, name))
    assert back.warnings == m.warnings and back.normalization == m.normalization
    io.write_brep(tmp_path / "n.json", back)
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "n.json").read_bytes()


def test_brep_schema_checks(tmp_path):
    d = io.brep_to_dict(cube_model())
    with pytest.raises(SchemaMismatch):
        io.brep_from_dict(dict(d, schema="other"))
    with pytest.raises(SchemaMismatch):
        io.brep_from_dict(dict(d, version=99))
    bad = json.loads(json.dumps(d))
    bad["matrices"]["EV"].append([0, 99])
    with pytest.raises(SchemaMismatch):
        io.brep_from_dict(bad)


def test_bad_json_is_a_parse_error(tmp_path):
    (tmp_path / "m.json").write_text('{"schema":\n  oops}')
    with pytest.raises(ParseError) as err:
        io.read_brep(tmp_path / "m.json")
    assert err.value.line == 2


# Manifests.

def test_manifest_defaults(tmp_path):
    m = io.parse_manifest({"input": {"kind": "points", "path": "p.xyz"}}, tmp_path)
    assert m.boundary == "analytic" and m.inputs == [tmp_path / "p.xyz"]
    assert m.refine and not m.tiled


def test_manifest_with_two_boundary_sources_rejected(tmp_path):
    d = {"input": {"kind": "udf-grid", "path": "u.nvdu"},
         "boundary": {"analytic": True, "external": "b.nvdb"}}
    with pytest.raises(ManifestError):
        io.parse_manifest(d, tmp_path)
    d["boundary"] = {"source": "external", "labels": "l.nvdl"}
    with pytest.raises(ManifestError):
        io.parse_manifest(d, tmp_path)
    d["boundary"] = {"source": "analytic", "path": "b.nvdb"}
    with pytest.raises(ManifestError):
        io.parse_manifest(d, tmp_path)


@pytest.mark.parametrize("d", [
    [],
    {},
    {"input": {"kind": "mesh", "path": "x"}},
    {"input": {"kind": "points", "paths": ["a", "b"]}},
    {"input": {"kind": "points", "path": "a"}, "boundary": "external"},
    {"input": {"kind": "points", "path": "a"}, "boundary": "labels"},
])
def test_invalid_manifests(tmp_path, d):
    with pytest.raises(ManifestError):
        io.parse_manifest(d, tmp_path)


def test_config_overrides():
    cfg = io.config_from_overrides({"r": 32, "eps1": 0.002})
    assert cfg.r == 32 and cfg.eps1 == 0.002 and cfg.eps2 == Config().eps2
    with pytest.raises(ManifestError):
        io.config_from_overrides({"bogus": 1})
    with pytest.raises(ManifestError):
        io.config_from_overrides({"r": -4})
