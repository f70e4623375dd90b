"""Registration quality metrics.

Homography metrics compare mapped convex quadrilaterals by polygon clipping;
keypoint metrics match detections to ground truth by keypoint id.  Detection
distances are scored after anisotropic scaling into the 1280x720 reference
image space, so thresholds mean the same thing at any working resolution.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateProjection, NoMatchedKeypoints, NoSamples, PointAtInfinity, SingularMatrix
from .geometry import (
    EPS_T,
    apply_homography,
    clip_polygon,
    convex_polygon,
    homography_denominators,
    invert_homography,
    normalize_homography,
    points_in_convex_polygon,
    polygon_area,
)

REFERENCE_WIDTH_PX = 1280.0
REFERENCE_HEIGHT_PX = 720.0
AP_THRESHOLDS_PX = (5.0, 10.0, 15.0, 20.0)
PROJECTION_ERROR_SAMPLES = 2500


def _mapped_quad(H, corners, eps=EPS_T):
    """Corners through H as a validated convex quad; DegenerateProjection otherwise."""
    den = homography_denominators(H, corners)
    if np.any(den <= eps):
        raise DegenerateProjection("mapped vertex at or behind projective infinity")
    pts = (corners @ np.asarray(H, dtype=float)[:2, :2].T + H[:2, 2]) / den[:, None]
    try:
        return convex_polygon(pts)
    except ValueError as e:
        raise DegenerateProjection(f"mapped quad is not convex: {e}") from None


def _composite(left, right):
    # left o right, renormalized to h33 = 1 so denominator signs are anchored
    # at the origin like every other homography here.
    try:
        return normalize_homography(np.asarray(left, float) @ np.asarray(right, float))
    except SingularMatrix:
        raise DegenerateProjection("composite map cannot be normalized to h33 = 1") from None


def _iou(poly_a, poly_b):
    inter = polygon_area(clip_polygon(poly_a, poly_b))
    union = polygon_area(poly_a) + polygon_area(poly_b) - inter
    if union <= 0.0:
        return 0.0
    return float(inter / union)


def iou_entire(h_gt, h_pred, template, dims, eps=EPS_T):
    """Whole-field IoU in template space.

    The field rectangle is pushed to the image by the ground truth and pulled
    back by the prediction; a perfect prediction reproduces the rectangle.
    dims is unused by the math but kept for signature symmetry with the other
    whole-frame metrics.
    """
    del dims
    comp = _composite(invert_homography(h_pred), h_gt)
    quad = _mapped_quad(comp, template.corners(), eps)
    return _iou(quad, template.corners())


def iou_entire_image(h_gt, h_pred, dims, eps=EPS_T):
    """Whole-field IoU composited in image space (the convention some public
    evaluation code uses): the image rectangle goes to the template through
    the ground truth inverse and back through the prediction."""
    comp = _composite(np.asarray(h_pred, dtype=float), invert_homography(h_gt))
    quad = _mapped_quad(comp, dims.corners(), eps)
    return _iou(quad, dims.corners())


def iou_part(h_gt, h_pred, dims, eps=EPS_T):
    """IoU of the two template-space projections of the image rectangle (visible part only)."""
    quad_gt = _mapped_quad(invert_homography(h_gt), dims.corners(), eps)
    quad_pred = _mapped_quad(invert_homography(h_pred), dims.corners(), eps)
    return _iou(quad_gt, quad_pred)


def projection_error(h_gt, h_pred, template, dims, n_samples=PROJECTION_ERROR_SAMPLES,
                     rng_seed=0, eps=EPS_T):
    """Mean re-projection disagreement on the ground, in meters.

    Rejection-samples n_samples image points uniformly over the image
    rectangle intersected with the ground-truth projection of the field
    rectangle, maps each through both inverse homographies, and averages the
    distance in template coordinates.
    """
    inv_gt = invert_homography(h_gt)
    inv_pred = invert_homography(h_pred)
    field_quad = _mapped_quad(h_gt, template.corners(), eps)
    visible = clip_polygon(field_quad, dims.corners())
    if polygon_area(visible) <= 0.0:
        raise DegenerateProjection("ground-truth field projection misses the image")

    rng = np.random.default_rng(rng_seed)
    lo = visible.min(axis=0)
    hi = visible.max(axis=0)
    pts = np.empty((0, 2))
    rounds = 0
    while pts.shape[0] < n_samples:
        rounds += 1
        if rounds > 1000:
            raise DegenerateProjection("rejection sampling failed to cover the visible region")
        cand = rng.uniform(lo, hi, size=(max(4 * n_samples, 64), 2))
        pts = np.concatenate([pts, cand[points_in_convex_polygon(cand, visible)]])
    pts = pts[:n_samples]

    try:
        on_gt = apply_homography(inv_gt, pts, eps=eps)
        on_pred = apply_homography(inv_pred, pts, eps=eps)
    except PointAtInfinity:
        raise DegenerateProjection("sampled image point has no finite field image") from None
    return float(np.mean(np.sqrt(((on_gt - on_pred) ** 2).sum(axis=1))))


def reprojection_error(h_gt, h_pred, template, dims, eps=EPS_T):
    """Mean keypoint displacement in pixels over GT-visible keypoints, as a
    fraction of image height."""
    h_gt = np.asarray(h_gt, dtype=float)
    h_pred = np.asarray(h_pred, dtype=float)
    den_gt = homography_denominators(h_gt, template.positions)
    front = den_gt > eps
    proj_gt = np.full((template.n, 2), np.nan)
    proj_gt[front] = (template.positions[front] @ h_gt[:2, :2].T + h_gt[:2, 2]) / den_gt[front, None]
    w, h = float(dims.width_px), float(dims.height_px)
    vis = front.copy()
    vis[front] &= ((proj_gt[front, 0] >= 0) & (proj_gt[front, 0] <= w)
                   & (proj_gt[front, 1] >= 0) & (proj_gt[front, 1] <= h))
    if not np.any(vis):
        raise DegenerateProjection("no template keypoint visible under the ground truth")

    den_pred = homography_denominators(h_pred, template.positions[vis])
    if np.any(np.abs(den_pred) <= eps):
        raise DegenerateProjection("predicted projection sends a visible keypoint to infinity")
    proj_pred = (template.positions[vis] @ h_pred[:2, :2].T + h_pred[:2, 2]) / den_pred[:, None]
    dist = np.sqrt(((proj_pred - proj_gt[vis]) ** 2).sum(axis=1))
    return float(dist.mean() / h)


def _match_by_id(est_ids, est_xy, gt_ids, gt_xy):
    est = {int(i): p for i, p in zip(np.asarray(est_ids, int), np.atleast_2d(est_xy))}
    gt = {int(i): p for i, p in zip(np.asarray(gt_ids, int), np.atleast_2d(gt_xy))}
    if len(est) != len(np.atleast_1d(est_ids)) or len(gt) != len(np.atleast_1d(gt_ids)):
        raise ValueError("duplicate keypoint ids")
    common = sorted(est.keys() & gt.keys())
    return est, gt, common


def nrmse(est_ids, est_xy, gt_ids, gt_xy, dims, axis="x"):
    """Per-axis normalized RMSE over id-matched keypoints.

    (1 / (Z sqrt(L))) * sqrt(sum (x - x_hat)^2), Z the image width for the x
    axis and height for y, L the number of matched keypoints.  Raises
    NoMatchedKeypoints when no id appears on both sides.
    """
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    est, gt, common = _match_by_id(est_ids, est_xy, gt_ids, gt_xy)
    if not common:
        raise NoMatchedKeypoints("no keypoint id present in both estimate and ground truth")
    a = 0 if axis == "x" else 1
    z = float(dims.width_px if axis == "x" else dims.height_px)
    diffs = np.array([est[i][a] - gt[i][a] for i in common])
    return float(np.sqrt((diffs ** 2).sum()) / (z * np.sqrt(len(common))))


def _reference_scaled_distances(det_ids, det_xy, gt_ids, gt_xy, dims):
    sx = REFERENCE_WIDTH_PX / float(dims.width_px)
    sy = REFERENCE_HEIGHT_PX / float(dims.height_px)
    det, gt, common = _match_by_id(det_ids, det_xy, gt_ids, gt_xy)
    if common:
        d = np.array([det[i] - gt[i] for i in common]) * np.array([sx, sy])
        dists = np.sqrt((d ** 2).sum(axis=1))
    else:
        dists = np.empty(0)
    return dists, len(det), len(gt)


@dataclass(frozen=True)
class PrecisionRecall:
    precision: float
    recall: float
    precision_defined: bool
    recall_defined: bool
    true_positives: int
    n_detections: int
    n_ground_truth: int


def precision_recall(det_ids, det_xy, gt_ids, gt_xy, dims, threshold_px=20.0):
    """Detection precision/recall at one distance threshold (reference space).

    A detection is a true positive when a ground-truth keypoint with the same
    id lies within threshold_px after scaling to 1280x720.  Empty
    denominators give 0.0 with the corresponding _defined flag cleared.
    """
    dists, n_det, n_gt = _reference_scaled_distances(det_ids, det_xy, gt_ids, gt_xy, dims)
    tp = int((dists <= threshold_px).sum())
    return PrecisionRecall(
        precision=tp / n_det if n_det else 0.0,
        recall=tp / n_gt if n_gt else 0.0,
        precision_defined=n_det > 0,
        recall_defined=n_gt > 0,
        true_positives=tp,
        n_detections=n_det,
        n_ground_truth=n_gt,
    )


def average_precision(det_ids, det_xy, gt_ids, gt_xy, dims, thresholds=AP_THRESHOLDS_PX):
    """AP over a threshold sweep: sum of precision-weighted recall increments.

    AP = sum_n (R_n - R_{n-1}) P_n with R_0 = 0 and thresholds ascending.
    Undefined precision or recall terms contribute zero, so a frame with no
    detections or no ground truth scores 0.0.
    """
    dists, n_det, n_gt = _reference_scaled_distances(det_ids, det_xy, gt_ids, gt_xy, dims)
    ap = 0.0
    prev_recall = 0.0
    for t in sorted(thresholds):
        tp = int((dists <= t).sum())
        precision = tp / n_det if n_det else 0.0
        recall = tp / n_gt if n_gt else 0.0
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return float(ap)


def mean_average_precision(frames, dims, thresholds=AP_THRESHOLDS_PX):
    """Mean per-frame AP.  frames yields (det_ids, det_xy, gt_ids, gt_xy)."""
    aps = [average_precision(d_ids, d_xy, g_ids, g_xy, dims, thresholds)
           for d_ids, d_xy, g_ids, g_xy in frames]
    if not aps:
        raise NoSamples("no frames to average")
    return float(np.mean(aps))
