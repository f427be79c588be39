import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import cube_model
from voronoi_brep.brep import BRepModel
from voronoi_brep.core import MATCH_THRESHOLDS
from voronoi_brep.errors import EmptyExtent, EmptyInput
from voronoi_brep.metrics import (
    chamfer,
    detection_scores,
    evaluate,
    greedy_match,
    match_at,
    model_samples,
    sample_primitive,
    score_class,
    topo_f1,
)
from voronoi_brep.primitives import Circle, Cone, Cylinder, Ellipse, Line, Plane, Sphere, Torus


def _brute_chamfer(A, B):
    D = np.linalg.norm(np.asarray(A)[:, None, :] - np.asarray(B)[None, :, :], axis=2)
    return 0.5 * (D.min(axis=1).mean() + D.min(axis=0).mean())


def _self_matchings(model):
    return {"surface": [(i, i) for i in range(model.n_surfaces)],
            "curve": [(i, i) for i in range(model.n_curves)],
            "vertex": [(i, i) for i in range(model.n_vertices)]}


# Sampling.

def test_circle_sample_count_and_radius():
    pts = sample_primitive(Circle((0.5, 0.5, 0.5), (0, 0, 1), 0.25), 400)
    assert abs(len(pts) - 2 * math.pi * 0.25 * 400) <= 1
    assert np.abs(np.linalg.norm(pts - 0.5, axis=1) - 0.25).max() < 1e-12


def test_sphere_samples_on_surface():
    pts = sample_primitive(Sphere((0.5, 0.5, 0.5), 0.3), 2000)
    assert np.abs(np.linalg.norm(pts - 0.5, axis=1) - 0.3).max() < 1e-9
    assert abs(len(pts) - 4 * math.pi * 0.09 * 2000) <= 0.05 * 4 * math.pi * 0.09 * 2000


def test_nonpositive_density_rejected():
    with pytest.raises(EmptyExtent):
        sample_primitive(Plane((0, 0, 1), 0.5), 0)
    with pytest.raises(EmptyExtent):
        sample_primitive(Plane((0, 0, 1), 0.5), -1.0)


def test_plane_outside_extent_rejected():
    with pytest.raises(EmptyExtent):
        sample_primitive(Plane((0, 0, 1), 2.0), 100)


def test_plane_clipped_to_unit_box():
    pts = sample_primitive(Plane((0, 0, 1), 0.5), 400)
    assert np.allclose(pts[:, 2], 0.5)
    assert pts[:, :2].min() >= -1e-9 and pts[:, :2].max() <= 1 + 1e-9
    assert abs(len(pts) - 400) <= 0.1 * 400


@pytest.mark.parametrize("prim", [
    Plane((0.0, 0.6, 0.8), 0.6),
    Sphere((0.5, 0.5, 0.5), 0.2),
    Cylinder((0.5, 0.5, 0.0), (0, 0, 1), 0.2),
    Cone((0.5, 0.5, 0.9), (0, 0, -1), math.radians(25)),
    Torus((0.5, 0.5, 0.5), (0, 0, 1), 0.3, 0.08),
    Line((0.5, 0.5, 0.0), (1, 1, 1)),
    Circle((0.5, 0.5, 0.5), (1, 0, 0), 0.2),
    Ellipse((0.5, 0.5, 0.5), (0, 0, 1), (1, 0, 0), 0.3, 0.1),
], ids=lambda p: p.kind)
def test_samples_lie_on_primitive_and_are_deterministic(prim):
    density = 2000 if prim.is_surface else 400
    a = sample_primitive(prim, density)
    b = sample_primitive(prim, density)
    assert len(a) >= 16
    assert np.array_equal(a, b)
    assert prim.distance(a).max() < 1e-9


def test_extent_clips_bounded_primitive():
    ext = [[0.5, 0.0, 0.0], [1.0, 1.0, 1.0]]
    pts = sample_primitive(Sphere((0.5, 0.5, 0.5), 0.3), 2000, ext)
    assert pts[:, 0].min() >= 0.5 - 0.05


# Chamfer.

def test_chamfer_identity_and_single_pair():
    A = np.random.default_rng(0).random((50, 3))
    assert chamfer(A, A) == 0.0
    assert chamfer([[0, 0, 0]], [[0.1, 0, 0]]) == pytest.approx(0.1)


def test_chamfer_rotated_circle():
    c = Circle((0.5, 0.5, 0.5), (0, 0, 1), 0.25)
    t = np.arange(100) * 2 * np.pi / 100
    A = c.at(t)
    B = c.at(t + np.pi / 2)
    assert chamfer(A, B) < 1e-3


def test_chamfer_empty_rejected():
    with pytest.raises(EmptyInput):
        chamfer(np.zeros((0, 3)), np.zeros((3, 3)))


pointsets = arrays(np.float64, st.tuples(st.integers(1, 20), st.just(3)), elements=st.floats(-1, 1))


@settings(max_examples=60, deadline=None)
@given(pointsets, pointsets)
def test_chamfer_matches_brute_force_and_is_symmetric(A, B):
    assert chamfer(A, B) == chamfer(B, A)
    assert chamfer(A, B) == pytest.approx(_brute_chamfer(A, B), rel=1e-12, abs=1e-15)


@settings(max_examples=40, deadline=None)
@given(pointsets, pointsets, st.integers(0, 19))
def test_duplicate_point_keeps_nearest_distances(A, B, k):
    # A duplicate leaves every nearest distance unchanged; only the B-side mean gains a term.
    k = k % len(B)
    B2 = np.concatenate([B, B[k:k + 1]])
    assert chamfer(B2, B) == 0.0
    assert chamfer(A, B2) == pytest.approx(_brute_chamfer(A, B2), rel=1e-12, abs=1e-15)


# Matching.

def _brute_match(C, t):
    """Most pairs below t, then least cost, by exhaustive enumeration."""
    n, m = C.shape
    best = (0, 0.0)
    for perm in itertools.permutations(range(max(n, m)), min(n, m)):
        idx = zip(range(n), perm) if n <= m else zip(perm, range(m))
        pairs = [(i, j) for i, j in idx if C[i, j] < t]
        key = (len(pairs), -sum(C[i, j] for i, j in pairs))
        if key[0] > best[0] or (key[0] == best[0] and -key[1] < best[1]):
            best = (key[0], -key[1])
    return best


cost_matrices = arrays(
    np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)), elements=st.floats(0.0, 0.2)
)


@settings(max_examples=80, deadline=None)
@given(cost_matrices, st.sampled_from(MATCH_THRESHOLDS))
def test_matching_is_optimal(C, t):
    pairs = match_at(C, t)
    assert len({i for i, _ in pairs}) == len(pairs) == len({j for _, j in pairs})
    assert all(C[i, j] < t for i, j in pairs)
    n, cost = _brute_match(C, t)
    assert len(pairs) == n
    assert sum(C[i, j] for i, j in pairs) == pytest.approx(cost, abs=1e-12)
    assert len(pairs) >= len(greedy_match(C, t))


@settings(max_examples=60, deadline=None)
@given(cost_matrices)
def test_matched_count_monotone_in_threshold(C):
    counts = [len(match_at(C, t)) for t in sorted(MATCH_THRESHOLDS)]
    assert counts == sorted(counts)


def test_optimal_beats_greedy_on_crafted_matrix():
    C = np.array([[0.001, 0.002], [0.003, 0.5]])
    assert len(greedy_match(C, 0.01)) == 1
    assert len(match_at(C, 0.01)) == 2


def test_score_conventions():
    assert score_class(0, 3, []).f1 == 0.0
    assert score_class(3, 0, []).precision == 0.0
    both = score_class(0, 0, [])
    assert (both.precision, both.recall, both.f1) == (1.0, 1.0, 1.0)
    s = score_class(1, 2, [(0, 0)])
    assert (s.precision, s.recall, s.f1) == (1.0, 0.5, pytest.approx(2 / 3))
    assert s.good_count <= s.total_count


# Detection scores.

def test_identical_lists_score_one():
    gt = model_samples(cube_model())
    reports, avg, _ = detection_scores(gt, gt)
    assert [r.threshold for r in reports] == list(MATCH_THRESHOLDS)
    for r in reports + [avg]:
        for cls in ("vertex", "curve", "surface"):
            assert (r[cls].precision, r[cls].recall, r[cls].f1) == (1.0, 1.0, 1.0)


def test_empty_prediction_scores_zero():
    gt = model_samples(cube_model())
    reports, _, _ = detection_scores({"vertex": [], "curve": [], "surface": []}, gt)
    for r in reports:
        for cls in ("vertex", "curve", "surface"):
            assert (r[cls].precision, r[cls].recall, r[cls].f1) == (0.0, 0.0, 0.0)


def test_one_of_two_spheres():
    a = sample_primitive(Sphere((0.25, 0.5, 0.5), 0.1), 5000)
    b = sample_primitive(Sphere((0.75, 0.5, 0.5), 0.1), 5000)
    assert chamfer(a, b) > 0.3
    reports, _, _ = detection_scores({"surface": [a]}, {"surface": [a, b]}, thresholds=(0.01,))
    s = reports[0]["surface"]
    assert (s.precision, s.recall) == (1.0, 0.5)
    assert s.f1 == pytest.approx(2 / 3)
    assert s.matched == [(0, 0)]


# Topology F1.

def test_topology_self_is_one():
    m = cube_model()
    out = topo_f1(m, m, _self_matchings(m))
    assert out["FE"]["f1"] == 1.0 and out["EV"]["f1"] == 1.0


def test_zeroed_fe_scores_zero():
    m = cube_model()
    pred = BRepModel(m.vertices, m.curves, m.surfaces, m.FF, np.zeros_like(m.FE), m.EE, m.EV, m.FV)
    assert topo_f1(pred, m, _self_matchings(m))["FE"]["f1"] == 0.0


def test_cube_missing_one_curve():
    gt = cube_model()
    pred = cube_model(drop_curve=5)
    match = _self_matchings(gt)
    match["curve"] = [(i, i if i < 5 else i + 1) for i in range(11)]
    ev = topo_f1(pred, gt, match)["EV"]
    assert ev["precision"] == 1.0
    assert ev["recall"] == pytest.approx(22 / 24)
    assert ev["f1"] == pytest.approx(44 / 46)


def test_evaluate_missing_curve_end_to_end():
    out = evaluate(cube_model(drop_curve=5), cube_model())
    assert out["topology"]["EV"]["f1"] == pytest.approx(44 / 46)
    assert out["counts"] == {"pred": [8, 11, 6], "gt": [8, 12, 6]}


def test_evaluate_self():
    m = cube_model()
    out = evaluate(m, m)
    assert out["chamfer"] == {"vertex": 0.0, "curve": 0.0, "surface": 0.0}
    for rep in out["detection"]:
        for cls in rep["classes"].values():
            assert cls["f1"] == 1.0
    assert out["topology"]["FE"]["f1"] == out["topology"]["EV"]["f1"] == 1.0
