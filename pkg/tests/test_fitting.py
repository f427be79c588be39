import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import FIXTURE_KINDS, fibonacci_sphere, param_error, primitive_fixture
from voronoi_brep.errors import (
    AllKindsFailed,
    DegenerateConfiguration,
    NoModelFound,
    NonConvergent,
    TooFewPoints,
)
from voronoi_brep.fitting import (
    CellFit,
    fit_best_curve,
    fit_best_surface,
    fit_cell,
    fit_curve,
    fit_plane,
    fit_sphere,
    fit_surface,
    ransac_multi,
)
from voronoi_brep.primitives import CURVE_KINDS, SURFACE_KINDS, Plane, Sphere

EPS1 = 0.001


def _fit(kind, pts):
    return fit_surface(pts, kind) if kind in SURFACE_KINDS else fit_curve(pts, kind)


def test_three_point_plane():
    res = fit_plane([(0, 0, 0), (1, 0, 0), (0, 1, 0)])
    assert res.primitive.normal == pytest.approx((0, 0, 1))
    assert res.primitive.offset == pytest.approx(0.0, abs=1e-15)
    assert res.rms_error == pytest.approx(0.0, abs=1e-15)
    assert res.inlier_count == 3


def test_plane_normal_canonical_orientation():
    res = fit_plane([(0, 0, 1), (1, 0, 1), (0, 1, 1), (1, 1, 1)])
    assert res.primitive.normal[2] > 0
    res = fit_plane([(0, 0, 0), (0, 1, 0), (0, 0, 1), (0, 1, 1)])
    assert res.primitive.normal == pytest.approx((1, 0, 0))


def test_collinear_plane_is_rank_deficient():
    res = fit_plane([(0, 0, 0), (1, 1, 1), (2, 2, 2), (3, 3, 3)])
    assert res.rank_deficient and res.rms_error == pytest.approx(0.0, abs=1e-12)


def test_fibonacci_sphere():
    c = np.array([0.5, 0.5, 0.5])
    res = fit_sphere(fibonacci_sphere(1000, c, 0.3))
    assert np.max(np.abs(np.asarray(res.primitive.center) - c)) < 1e-6
    assert abs(res.primitive.radius - 0.3) < 1e-6
    assert res.rms_error < 1e-7


def test_noisy_cylinder_radius():
    rng = np.random.default_rng(0)
    t, h = rng.uniform(0, 2 * np.pi, 1000), rng.uniform(0, 1, 1000)
    pts = np.c_[0.5 + 0.2 * np.cos(t), 0.5 + 0.2 * np.sin(t), h] + rng.normal(0, 0.002, (1000, 3))
    res = fit_surface(pts, "cylinder")
    assert abs(res.primitive.radius - 0.2) < 0.01
    assert abs(abs(res.primitive.axis[2]) - 1.0) < 1e-3


def test_two_point_line():
    res = fit_curve([(0, 0, 0), (0, 0, 1)], "line")
    assert res.primitive.direction == pytest.approx((0, 0, 1))
    assert res.primitive.distance([[0, 0, 0.3]])[0] == pytest.approx(0.0, abs=1e-15)
    assert res.rms_error == pytest.approx(0.0, abs=1e-15)


def test_circle_hundred_points():
    t = np.linspace(0, 2 * np.pi, 100, endpoint=False)
    pts = np.c_[0.5 + 0.25 * np.cos(t), 0.5 + 0.25 * np.sin(t), np.full(100, 0.5)]
    p = fit_curve(pts, "circle").primitive
    assert np.max(np.abs(np.asarray(p.center) - 0.5)) < 1e-6
    assert abs(p.radius - 0.25) < 1e-6
    assert p.normal == pytest.approx((0, 0, 1), abs=1e-6)


def test_ellipse_two_hundred_points():
    t = np.linspace(0, 2 * np.pi, 200, endpoint=False)
    pts = np.c_[0.5 + 0.3 * np.cos(t), 0.5 + 0.15 * np.sin(t), np.full(200, 0.5)]
    p = fit_curve(pts, "ellipse").primitive
    assert abs(p.a - 0.3) < 1e-4 and abs(p.b - 0.15) < 1e-4
    assert abs(abs(p.major_axis[0]) - 1.0) < 1e-6


@pytest.mark.parametrize("kind", FIXTURE_KINDS)
def test_noiseless_recovery(kind):
    truth, pts = primitive_fixture(kind, 1000)
    assert param_error(_fit(kind, pts).primitive, truth) < 1e-4


@pytest.mark.parametrize("kind", FIXTURE_KINDS)
def test_noisy_recovery(kind):
    truth, pts = primitive_fixture(kind, 1000, sigma=0.002)
    assert param_error(_fit(kind, pts).primitive, truth) < 0.01


@pytest.mark.parametrize("kind, n", [("plane", 2), ("sphere", 3), ("cylinder", 5), ("cone", 5), ("torus", 6),
                                     ("line", 1), ("circle", 2), ("ellipse", 4)])
def test_too_few_points(kind, n):
    pts = np.random.default_rng(0).random((n, 3))
    with pytest.raises(TooFewPoints):
        _fit(kind, pts)


def test_coincident_points_rejected():
    with pytest.raises(DegenerateConfiguration):
        fit_plane(np.full((5, 3), 0.5))
    with pytest.raises(DegenerateConfiguration):
        fit_curve(np.full((5, 3), 0.5), "line")


def test_coplanar_points_do_not_make_a_cylinder():
    rng = np.random.default_rng(0)
    pts = np.c_[rng.random((50, 2)), np.full(50, 0.5)]
    try:
        res = fit_surface(pts, "cylinder")
    except (NonConvergent, DegenerateConfiguration):
        return
    # A huge-radius "cylinder" hugging the plane is acceptable only if it never beats the plane.
    assert res.rms_error >= fit_plane(pts).rms_error - 1e-12


def test_unknown_kind():
    with pytest.raises(ValueError):
        fit_surface(np.random.default_rng(0).random((20, 3)), "spline")


# Best-of selection.

def test_best_surface_prefers_sphere_over_torus():
    pts = fibonacci_sphere(800, (0.5, 0.5, 0.5), 0.3)
    res = fit_best_surface(pts)
    assert res.kind == "sphere"
    try:
        torus = fit_surface(pts, "torus")
        assert torus.rms_error >= res.rms_error - 1e-9
    except (NonConvergent, DegenerateConfiguration):
        pass


def test_best_surface_on_planar_points():
    rng = np.random.default_rng(0)
    pts = np.c_[rng.random((200, 2)), np.full(200, 0.3)]
    res = fit_best_surface(pts)
    assert res.kind == "plane" and res.rms_error < 1e-12


def test_best_of_is_min_over_kinds():
    pts = np.random.default_rng(4).random((12, 3))
    best = fit_best_surface(pts)
    rms = {}
    for kind in SURFACE_KINDS:
        try:
            rms[kind] = fit_best_surface(pts, kinds=(kind,)).rms_error
        except AllKindsFailed:
            pass
    assert best.rms_error <= min(rms.values()) + 1e-9
    first = next(k for k in SURFACE_KINDS if k in rms and rms[k] <= min(rms.values()) + 1e-9)
    assert best.kind == first


def test_best_curve_min_over_kinds():
    pts = np.random.default_rng(2).random((6, 3))
    best = fit_best_curve(pts)
    for kind in CURVE_KINDS:
        try:
            assert best.rms_error <= fit_curve(pts, kind).rms_error + 1e-9
        except (DegenerateConfiguration, NonConvergent, TooFewPoints):
            pass


def test_best_of_all_failed():
    with pytest.raises(AllKindsFailed):
        fit_best_surface(np.zeros((2, 3)))


# Cell policy.

def _replay_policy(points, eps1):
    """Plane, then curve, then best surface, else multi; spelled out with the individual fitters."""
    plane = fit_plane(points)
    if plane.rms_error < eps1:
        try:
            curve = fit_best_curve(points)
            if curve.rms_error < eps1:
                return "curve"
        except AllKindsFailed:
            pass
        return "surface"
    try:
        if fit_best_surface(points).rms_error < eps1:
            return "surface"
    except AllKindsFailed:
        pass
    return "multi"


def _two_planes(n=600, seed=0):
    rng = np.random.default_rng(seed)
    a = np.c_[rng.uniform(0.2, 0.5, n), rng.uniform(0.2, 0.5, n), np.full(n, 0.2)]
    b = np.c_[np.full(n, 0.2), rng.uniform(0.2, 0.5, n), rng.uniform(0.2, 0.5, n)]
    return np.concatenate([a, b])


def test_line_segment_is_a_curve():
    pts = np.c_[np.linspace(0.2, 0.6, 50), np.full(50, 0.3), np.full(50, 0.4)]
    fit = fit_cell(pts, EPS1)
    assert fit.variant == "curve" and fit.fits[0].kind == "line"


def test_plane_patch_is_a_surface():
    rng = np.random.default_rng(0)
    pts = np.c_[rng.uniform(0.2, 0.5, 1000), rng.uniform(0.2, 0.5, 1000), np.full(1000, 0.4)]
    fit = fit_cell(pts, EPS1)
    assert fit.variant == "surface" and fit.fits[0].kind == "plane"
    assert fit_best_curve(pts).rms_error > EPS1


def test_two_perpendicular_planes_are_multi():
    pts = _two_planes()
    fit = fit_cell(pts, EPS1, seed=0)
    assert fit.variant == "multi"
    assert [f.kind for f in fit.fits] == ["plane", "plane"]
    normals = sorted(tuple(np.round(np.abs(f.primitive.normal), 6)) for f in fit.fits)
    assert np.allclose(normals, [(0, 0, 1), (1, 0, 0)], atol=1e-3)
    for f in fit.fits:
        assert f.rms_error <= EPS1


def test_sphere_cell_is_a_surface():
    fit = fit_cell(fibonacci_sphere(500, (0.5, 0.5, 0.5), 0.2), EPS1)
    assert fit.variant == "surface" and fit.fits[0].kind == "sphere"


def test_degenerate_cells():
    assert fit_cell(np.zeros((0, 3)), EPS1).variant == "degenerate"
    assert fit_cell(np.full((2, 3), 0.5), EPS1).variant == "degenerate"
    tiny = 0.5 + np.random.default_rng(0).random((20, 3)) * 1e-3
    assert fit_cell(tiny, EPS1, spacing=1 / 64).variant == "degenerate"


@pytest.mark.parametrize("maker", [
    lambda: np.c_[np.linspace(0, 1, 30), np.zeros(30), np.zeros(30)],
    lambda: primitive_fixture("circle", 300)[1],
    lambda: primitive_fixture("plane", 300)[1],
    lambda: primitive_fixture("cylinder", 300)[1],
    lambda: primitive_fixture("torus", 300)[1],
    _two_planes,
    lambda: np.random.default_rng(7).random((200, 3)),
])
def test_policy_matches_replay(maker):
    pts = maker()
    fit = fit_cell(pts, EPS1)
    assert fit.variant in ("surface", "curve", "multi", "degenerate")
    assert fit.variant == _replay_policy(pts, EPS1)


def test_cell_fit_variant_validation():
    with pytest.raises(ValueError):
        CellFit("triangle")


# RANSAC.

def test_ransac_two_planes():
    out = ransac_multi(_two_planes(), EPS1, seed=3)
    assert len(out) == 2
    normals = sorted(tuple(np.abs(f.primitive.normal)) for f in out)
    assert np.allclose(normals, [(0, 0, 1), (1, 0, 0)], atol=1e-3)
    assert sum(f.inlier_count for f in out) >= 0.95 * 1200


def test_ransac_single_sphere():
    out = ransac_multi(fibonacci_sphere(600, (0.5, 0.5, 0.5), 0.25), EPS1)
    assert len(out) == 1 and out[0].kind == "sphere"


def test_ransac_random_points():
    pts = np.random.default_rng(0).random((10, 3))
    try:
        out = ransac_multi(pts, EPS1)
    except NoModelFound:
        return
    assert len(out) <= 2


def test_ransac_is_seeded():
    pts = np.concatenate([_two_planes(), fibonacci_sphere(300, (0.7, 0.7, 0.7), 0.1)])
    a = ransac_multi(pts, EPS1, seed=5)
    b = ransac_multi(pts, EPS1, seed=5)
    assert [f.primitive for f in a] == [f.primitive for f in b]


def test_ransac_needs_ten_points():
    with pytest.raises(TooFewPoints):
        ransac_multi(np.random.default_rng(0).random((9, 3)), EPS1)


# Properties.

@pytest.mark.parametrize("kind", ["plane", "sphere"])
def test_closed_form_fits_are_local_minima(kind):
    truth, pts = primitive_fixture(kind, 500, sigma=0.002, seed=1)
    res = _fit(kind, pts)
    base = res.rms_error
    prim = res.primitive
    params = prim.params()
    for i in range(len(params)):
        for step in (-1e-3, 1e-3):
            p = params.copy()
            p[i] += step
            if kind == "plane":
                other = Plane(tuple(p[:3]), p[3])
            else:
                other = Sphere(tuple(p[:3]), p[3])
            rms = math.sqrt(np.mean(other.distance(pts) ** 2))
            assert rms >= base - 1e-12


@settings(max_examples=12, deadline=None)
@given(st.sampled_from(["plane", "sphere", "cylinder", "circle", "line"]), st.floats(0.25, 4.0))
def test_scale_equivariance(kind, s):
    truth, pts = primitive_fixture(kind, 400, sigma=0.001, seed=2)
    a = _fit(kind, pts)
    b = _fit(kind, pts * s)
    assert b.rms_error == pytest.approx(a.rms_error * s, rel=1e-5, abs=1e-12)
    pa, pb = a.primitive.canonical(), b.primitive.canonical()
    for name in ("radius", "offset"):
        if hasattr(pa, name):
            assert getattr(pb, name) == pytest.approx(getattr(pa, name) * s, rel=1e-5)
    for name in ("normal", "axis", "direction"):
        if hasattr(pa, name):
            assert np.allclose(getattr(pb, name), getattr(pa, name), atol=1e-6)
