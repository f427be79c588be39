import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import bfs_components, label_adjacency
from voronoi_brep.cells import assign_points, build_cells, cell_adjacency, fill_holes, grow_regions
from voronoi_brep.core import Config, GridGeometry
from voronoi_brep.errors import NoCells, ResolutionMismatch
from voronoi_brep.grids import NONE, BoundaryGrid
from voronoi_brep.gt_voronoi import cells_from_labels
from voronoi_brep.udf import udf_from_distances, udf_from_points


def _boundary(flags):
    flags = np.asarray(flags, dtype=bool)
    return BoundaryGrid.from_flags(GridGeometry.unit(flags.shape[0]), flags)


def _ramp_udf(r, axis=0):
    """Distance growing along one axis, small enough to stay within d_max."""
    geo = GridGeometry.unit(r)
    return udf_from_distances(geo, 0.1 * geo.centers()[..., axis])


def _plane_flags(r=64, z=32):
    flags = np.zeros((r, r, r), dtype=bool)
    flags[:, :, z] = True
    return flags


# fill_holes

def test_fill_holes_keeps_closed_plane():
    b = _boundary(_plane_flags())
    out = fill_holes(b, _ramp_udf(64), Config(r=64))
    assert np.array_equal(out.flags, b.flags)


def test_fill_holes_on_empty_boundary():
    out = fill_holes(_boundary(np.zeros((16,) * 3)), _ramp_udf(16), Config(r=16))
    assert out.count == 0


def test_fill_holes_refills_punched_voxel():
    # The gradient runs along x, inside the boundary plane: the march from the
    # hole stays in the plane and sees boundary on every step.
    flags = _plane_flags()
    flags[32, 32, 32] = False
    out = fill_holes(_boundary(flags), _ramp_udf(64, axis=0), Config(r=64))
    assert out.flags[32, 32, 32]
    assert np.array_equal(out.flags, _plane_flags())


def test_fill_holes_is_single_pass():
    # A two-voxel gap in a line of boundary voxels: each gap voxel sees 4 of 8
    # samples as boundary and is filled; nothing beyond the gap grows.
    flags = np.zeros((16,) * 3, dtype=bool)
    flags[:, 8, 8] = True
    flags[7:9, 8, 8] = False
    out = fill_holes(_boundary(flags), _ramp_udf(16, axis=0), Config(r=16))
    assert out.flags[7, 8, 8] and out.flags[8, 8, 8]
    assert out.count == 16


def test_fill_holes_ignores_far_voxels():
    flags = _plane_flags(16, 8)
    flags[3, 3, 8] = False
    geo = GridGeometry.unit(16)
    far = udf_from_distances(geo, geo.centers()[..., 0] + 1.0)
    out = fill_holes(_boundary(flags), far, Config(r=16))
    assert not out.flags[3, 3, 8]


def test_fill_holes_resolution_mismatch():
    with pytest.raises(ResolutionMismatch):
        fill_holes(_boundary(np.zeros((8,) * 3)), _ramp_udf(16), Config(r=16))


# grow_regions

def test_no_boundary_gives_one_cell():
    cells = grow_regions(_boundary(np.zeros((8,) * 3)))
    assert cells.n_cells == 1 and (cells.cell_of == 0).all()


def test_plane_boundary_gives_two_cells():
    cells = grow_regions(_boundary(_plane_flags()))
    assert cells.n_cells == 2
    assert (cells.cell_of[:, :, :32] == 0).all() and (cells.cell_of[:, :, 33:] == 1).all()
    assert (cells.cell_of[:, :, 32] == NONE).all()


def test_all_boundary_raises():
    with pytest.raises(NoCells):
        grow_regions(_boundary(np.ones((4,) * 3)))


def test_small_fragments_dropped():
    flags = np.zeros((8,) * 3, dtype=bool)
    flags[:, :, 5] = True
    flags[:, :, 6] = False
    flags[:, :, 7] = True
    flags[2:, :, 6] = True  # leaves a 2x8 slab = 16 voxels
    flags[:, 1:, 6] = True  # now 2 voxels
    cells = grow_regions(_boundary(flags), min_cell_voxels=8)
    assert cells.n_cells == 1
    assert (cells.cell_of[:, :, 6] == NONE).all()


@settings(max_examples=40, deadline=None)
@given(arrays(np.bool_, (6, 6, 6), elements=st.booleans()), st.integers(1, 5))
def test_grow_regions_matches_bfs(flags, min_size):
    if flags.all():
        return
    oracle, n = bfs_components(~flags, min_size)
    if n == 0:
        with pytest.raises(NoCells):
            grow_regions(_boundary(flags), min_size)
        return
    cells = grow_regions(_boundary(flags), min_size)
    assert cells.n_cells == n
    assert np.array_equal(cells.cell_of, oracle)


def test_cube_cells_match_labels(gt):
    _, udf, labels, boundary, _ = gt("cube", 64)
    cells = grow_regions(boundary)
    oracle = cells_from_labels(labels)
    assert cells.n_cells == oracle.n_cells == 26
    mapping = {}
    for c in range(cells.n_cells):
        ids = np.unique(oracle.cell_of[cells.cell_of == c])
        assert len(ids) == 1
        mapping[c] = int(ids[0])
    assert sorted(mapping.values()) == list(range(26))
    adj = cell_adjacency(cells, boundary)
    grown = {tuple(sorted((mapping[int(a)], mapping[int(b)]))) for a, b in np.argwhere(np.triu(adj))}
    assert grown == label_adjacency(oracle.cell_of)


# cell_adjacency

def test_two_half_cells_adjacent():
    b = _boundary(_plane_flags(16, 8))
    cells = grow_regions(b)
    adj = cell_adjacency(cells, b)
    assert adj[0, 1] and adj[1, 0] and not adj[0, 0]


def test_thick_boundary_bridged():
    flags = np.zeros((16,) * 3, dtype=bool)
    flags[:, :, 7:9] = True
    b = _boundary(flags)
    cells = grow_regions(b)
    assert cell_adjacency(cells, b)[0, 1]


def test_single_cell_adjacency_empty():
    b = _boundary(np.zeros((8,) * 3))
    adj = cell_adjacency(grow_regions(b), b)
    assert adj.shape == (1, 1) and not adj.any()


def test_separated_cells_not_adjacent():
    flags = np.zeros((16,) * 3, dtype=bool)
    flags[:, :, 5:11] = True
    b = _boundary(flags)
    cells = grow_regions(b)
    assert cells.n_cells == 2 and not cell_adjacency(cells, b).any()


# assign_points

def test_input_points_join_containing_cell(gt):
    sc, udf, _, boundary, _ = gt("two_planes", 64)
    cells = grow_regions(boundary)
    pts = sc.samples[0]
    pts = pts[(pts < 1.0).all(axis=1)]  # points on the far box faces lie outside the grid
    cp = assign_points(cells, udf, pts)
    assert cp.source == "input"
    lower = cells.cell_of[0, 0, 0]
    assert len(cp.points[lower]) == len(pts)
    assert sum(cp.counts) == len(pts)


def test_point_in_boundary_voxel_falls_back_to_neighbor_cell():
    flags = np.zeros((16,) * 3, dtype=bool)
    flags[:, :, 8:] = True
    flags[:, :, 14:] = False
    b = _boundary(flags)
    cells = grow_regions(b)
    assert cells.n_cells == 2
    geo = b.geometry
    p = geo.world_of((4, 4, 8))[None, :]
    cp = assign_points(cells, _ramp_udf(16), p)
    assert len(cp.points[0]) == 1 and len(cp.points[1]) == 0
    # Deep inside the boundary slab nothing is within two voxels: the point is dropped.
    q = geo.world_of((4, 4, 10))[None, :]
    cp = assign_points(cells, _ramp_udf(16), q)
    assert cp.counts == [0, 0]


def test_projected_points_lie_on_sphere():
    geo = GridGeometry.unit(32)
    c = geo.centers()
    center, radius = np.array([0.5, 0.5, 0.5]), 0.3
    rng = np.random.default_rng(0)
    dirs = rng.normal(size=(20000, 3))
    pts = center + radius * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    udf = udf_from_points(pts, Config(r=32))
    cells = grow_regions(_boundary(np.zeros(geo.shape)))
    cp = assign_points(cells, udf)
    assert cp.source == "projected"
    proj = cp.points[0]
    assert len(proj) > 1000
    err = np.abs(np.linalg.norm(proj - center, axis=1) - radius)
    assert err.max() < 1.5 * geo.spacing
    assert c.shape[:3] == geo.shape


def test_degenerate_cells_flagged():
    geo = GridGeometry.unit(16)
    cells = grow_regions(_boundary(np.zeros(geo.shape)))
    cp = assign_points(cells, _ramp_udf(16), np.array([[0.5, 0.5, 0.5], [0.51, 0.5, 0.5]]))
    assert cp.is_degenerate(0)


def test_partition_and_determinism(gt):
    _, udf, _, boundary, _ = gt("capped_cylinder", 64)
    cfg = Config(r=64)
    a = build_cells(boundary, udf, cfg)
    b = build_cells(boundary, udf, cfg)
    assert np.array_equal(a.cell_of, b.cell_of) and np.array_equal(a.adjacency, b.adjacency)
    free = a.cell_of != NONE
    seen = np.zeros(a.cell_of.size, dtype=int)
    for v in a.voxel_lists:
        seen[v] += 1
    assert seen.max() == 1
    assert seen.sum() == free.sum()
