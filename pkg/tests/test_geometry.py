"""Projective primitives: mapping, DLT, robust fitting, polygon clipping."""

import numpy as np
import pytest

from fieldreg.errors import (
    DegenerateConfiguration,
    InsufficientPoints,
    PointAtInfinity,
    SingularMatrix,
)
from fieldreg.geometry import (
    apply_homography,
    clip_polygon,
    convex_polygon,
    dlt_homography,
    ensure_ccw,
    homography_denominators,
    homography_from_params,
    homography_params,
    invert_homography,
    normalize_homogeneous,
    normalize_homography,
    points_in_convex_polygon,
    polygon_area,
    ransac_homography,
    reprojection_distances,
    signed_area,
)
from helpers import random_homography, view_homography


def test_apply_homography_worked_example():
    # hand-computed: u = (2*10 + 3) / (0.01*10 + 1), v = (20 - 1) / 1.1
    H = np.array([[2.0, 0.0, 3.0], [0.0, 1.0, -1.0], [0.01, 0.0, 1.0]])
    out = apply_homography(H, np.array([10.0, 20.0]))
    assert out.shape == (2,)
    assert out[0] == pytest.approx(20.909090909090907, abs=1e-13)
    assert out[1] == pytest.approx(17.27272727272727, abs=1e-13)


def test_apply_homography_batch_matches_single():
    rng = np.random.default_rng(0)
    for _ in range(10):
        H = random_homography(rng)
        pts = rng.uniform(-2.0, 2.0, size=(7, 2))
        batch = apply_homography(H, pts)
        assert batch.shape == (7, 2)
        for i in range(7):
            single = apply_homography(H, pts[i])
            assert np.allclose(batch[i], single, atol=1e-14)


def test_apply_homography_identity_exact():
    pts = np.array([[3.5, -2.0], [0.0, 0.0], [1e6, 1e-6]])
    assert np.array_equal(apply_homography(np.eye(3), pts), pts)


def test_point_at_infinity_raises():
    H = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
    with pytest.raises(PointAtInfinity):
        apply_homography(H, np.array([0.0, 5.0]))  # denominator exactly 0
    with pytest.raises(PointAtInfinity):
        normalize_homogeneous(np.array([1.0, 1.0, 1e-15]))


def test_homography_denominators():
    H = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.5, -0.25, 2.0]])
    den = homography_denominators(H, np.array([[2.0, 4.0], [0.0, 0.0]]))
    assert den == pytest.approx([2.0, 2.0], abs=0)


def test_normalize_homography_scale_invariant():
    rng = np.random.default_rng(1)
    for _ in range(10):
        H = random_homography(rng)
        s = rng.uniform(0.1, 10.0) * rng.choice([-1.0, 1.0])
        assert np.allclose(normalize_homography(s * H), H, atol=1e-12)
    with pytest.raises(SingularMatrix):
        normalize_homography(np.array([[1.0, 0, 0], [0, 1.0, 0], [0, 0, 1e-15]]))


def test_invert_homography_round_trip():
    rng = np.random.default_rng(2)
    for _ in range(20):
        H = random_homography(rng)
        Hinv = invert_homography(H)
        assert Hinv[2, 2] == 1.0
        prod = H @ Hinv
        assert np.allclose(prod / prod[2, 2], np.eye(3), atol=1e-12)
        assert np.allclose(invert_homography(Hinv), H, atol=1e-10)
    with pytest.raises(SingularMatrix):
        invert_homography(np.ones((3, 3)))


def test_param_vector_order():
    # column-stacked: h11 h21 h31 h12 h22 h32 h13 h23
    H = np.array([[1.0, 4.0, 7.0], [2.0, 5.0, 8.0], [3.0, 6.0, 1.0]])
    p = homography_params(H)
    assert np.array_equal(p, np.arange(1.0, 9.0))
    assert np.array_equal(homography_from_params(p), H)


def test_params_round_trip_random():
    rng = np.random.default_rng(3)
    for _ in range(10):
        H = random_homography(rng)
        assert np.array_equal(homography_from_params(homography_params(H)), H)


def test_dlt_recovers_exact_homography():
    rng = np.random.default_rng(4)
    for n_points in (4, 6, 12):
        for _ in range(10):
            H = random_homography(rng)
            src = rng.uniform(-3.0, 3.0, size=(n_points, 2))
            dst = apply_homography(H, src)
            est = dlt_homography(src, dst)
            assert est[2, 2] == 1.0
            assert np.abs(est - H).max() < 1e-9


def test_dlt_view_homography_recovery():
    rng = np.random.default_rng(5)
    H = view_homography()
    src = rng.uniform([0.0, 0.0], [105.0, 68.0], size=(8, 2))
    dst = apply_homography(H, src)
    assert np.abs(dlt_homography(src, dst) - H).max() < 1e-9


def test_dlt_rejects_degenerate_input():
    with pytest.raises(InsufficientPoints):
        dlt_homography(np.zeros((3, 2)), np.zeros((3, 2)))
    # 4 collinear points span no projective frame
    src = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]])
    with pytest.raises(DegenerateConfiguration):
        dlt_homography(src, src + 1.0)
    with pytest.raises(DegenerateConfiguration):
        dlt_homography(np.zeros((4, 2)) + 2.5, np.ones((4, 2)))


def test_reprojection_distances():
    H = np.eye(3)
    src = np.array([[0.0, 0.0], [1.0, 0.0]])
    dst = np.array([[3.0, 4.0], [1.0, 0.0]])
    d = reprojection_distances(H, src, dst)
    assert d == pytest.approx([5.0, 0.0], abs=1e-14)


def test_ransac_clean_data_exact():
    rng = np.random.default_rng(6)
    for seed in range(10):
        H = random_homography(rng)
        src = rng.uniform(-3.0, 3.0, size=(12, 2))
        dst = apply_homography(H, src)
        est, mask = ransac_homography(src, dst, inlier_threshold_px=1e-6, rng_seed=seed)
        assert mask.all()
        assert np.abs(est - H).max() < 1e-9


def test_ransac_with_outliers():
    rng = np.random.default_rng(7)
    for seed in range(10):
        H = random_homography(rng)
        src = rng.uniform(-3.0, 3.0, size=(20, 2))
        dst = apply_homography(H, src)
        bad = rng.choice(20, size=6, replace=False)  # 30% outliers
        dst[bad] += rng.uniform(3.0, 6.0, size=(6, 2)) * rng.choice([-1.0, 1.0], size=(6, 2))
        est, mask = ransac_homography(src, dst, inlier_threshold_px=1e-3, rng_seed=seed)
        assert np.abs(est - H).max() < 1e-6
        good = np.ones(20, dtype=bool)
        good[bad] = False
        assert np.array_equal(mask, good)


def test_ransac_mask_matches_threshold():
    rng = np.random.default_rng(8)
    H = random_homography(rng)
    src = rng.uniform(-3.0, 3.0, size=(15, 2))
    dst = apply_homography(H, src)
    dst[0] += 50.0
    est, mask = ransac_homography(src, dst, inlier_threshold_px=1.0, rng_seed=0)
    d = reprojection_distances(est, src, dst)
    assert np.array_equal(mask, d <= 1.0)


def test_ransac_deterministic_in_seed():
    rng = np.random.default_rng(9)
    H = random_homography(rng)
    src = rng.uniform(-3.0, 3.0, size=(10, 2))
    dst = apply_homography(H, src) + rng.normal(0.0, 0.01, size=(10, 2))
    a = ransac_homography(src, dst, inlier_threshold_px=0.05, rng_seed=42)
    b = ransac_homography(src, dst, inlier_threshold_px=0.05, rng_seed=42)
    assert np.array_equal(a[0], b[0])
    assert np.array_equal(a[1], b[1])


def test_ransac_needs_four_points():
    pts = np.zeros((3, 2))
    with pytest.raises(InsufficientPoints):
        ransac_homography(pts, pts)


def test_signed_area_orientation():
    square = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
    assert signed_area(square) == pytest.approx(4.0, abs=0)
    assert signed_area(square[::-1]) == pytest.approx(-4.0, abs=0)
    assert polygon_area(square[::-1]) == pytest.approx(4.0, abs=0)
    flipped = ensure_ccw(square[::-1])
    assert signed_area(flipped) == pytest.approx(4.0, abs=0)


def test_convex_polygon_validation():
    square = np.array([[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]])
    assert np.array_equal(convex_polygon(square), square)
    bowtie = np.array([[0.0, 0.0], [2.0, 2.0], [2.0, 0.0], [0.0, 2.0]])
    with pytest.raises(ValueError):
        convex_polygon(bowtie)
    with pytest.raises(ValueError):
        convex_polygon(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 0.0]]))


def test_clip_polygon_overlapping_squares():
    a = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]])
    b = a + 2.0
    out = clip_polygon(a, b)
    assert polygon_area(out) == pytest.approx(4.0, abs=1e-12)
    assert set(map(tuple, out)) == {(2.0, 2.0), (4.0, 2.0), (4.0, 4.0), (2.0, 4.0)}


def test_clip_polygon_contained_and_disjoint():
    outer = np.array([[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]])
    inner = np.array([[2.0, 2.0], [3.0, 2.0], [3.0, 3.0], [2.0, 3.0]])
    assert polygon_area(clip_polygon(inner, outer)) == pytest.approx(1.0, abs=1e-12)
    assert polygon_area(clip_polygon(outer, inner)) == pytest.approx(1.0, abs=1e-12)
    far = inner + 100.0
    assert clip_polygon(outer, far).shape[0] == 0


def test_clip_polygon_triangle_square():
    # triangle (0,0) (4,0) (0,4) clipped to unit square: area 1 - 0.5*0 ... the
    # hypotenuse x+y=4 misses the square entirely, so the square survives whole
    tri = np.array([[0.0, 0.0], [4.0, 0.0], [0.0, 4.0]])
    sq = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    assert polygon_area(clip_polygon(sq, tri)) == pytest.approx(1.0, abs=1e-12)
    # shrink the triangle so the cut goes through: x+y <= 1 leaves half the square
    tri2 = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert polygon_area(clip_polygon(sq, tri2)) == pytest.approx(0.5, abs=1e-12)


def test_points_in_convex_polygon():
    quad = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 4.0], [0.0, 4.0]])
    pts = np.array([[2.0, 2.0], [4.5, 2.0], [0.0, 0.0], [-0.1, 3.0], [4.0, 4.0]])
    inside = points_in_convex_polygon(pts, quad)
    assert inside.tolist() == [True, False, True, False, True]
