"""Projective primitives: homogeneous points, homographies, DLT/RANSAC fitting, convex clipping.

Every homography in this package is a 3x3 float matrix normalized so its
bottom-right entry is exactly 1.  The 8 free entries travel as a flat vector
in column-stacked order (h11, h21, h31, h12, h22, h32, h13, h23).
"""

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateConfiguration,
    InsufficientPoints,
    NoConsensus,
    PointAtInfinity,
    SingularMatrix,
)

# Homogeneous scale below which a point counts as at infinity, and determinant
# magnitude below which a 3x3 map counts as singular.
EPS_T = 1e-12
EPS_DET = 1e-12

RANSAC_CONFIDENCE = 0.99


def normalize_homogeneous(point, eps=EPS_T):
    """Euclidean image (x/t, y/t) of a homogeneous vector (x, y, t).

    Raises PointAtInfinity when |t| <= eps.
    """
    p = np.asarray(point, dtype=float)
    if p.shape != (3,):
        raise ValueError(f"expected a homogeneous (x, y, t) vector, got shape {p.shape}")
    t = p[2]
    if abs(t) <= eps:
        raise PointAtInfinity(f"homogeneous scale {t} has magnitude <= {eps}")
    return p[:2] / t


def apply_homography(H, points, eps=EPS_T):
    """Map Euclidean point(s) through H and renormalize.

    points may be a single (2,) point or an (N, 2) array; the result has the
    same shape.  Raises PointAtInfinity if any mapped point has |t| <= eps.
    """
    H = np.asarray(H, dtype=float)
    pts = np.asarray(points, dtype=float)
    single = pts.ndim == 1
    P = np.atleast_2d(pts)
    hom = P @ H[:, :2].T + H[:, 2]
    t = hom[:, 2]
    if np.any(np.abs(t) <= eps):
        raise PointAtInfinity("a mapped point lies at projective infinity")
    out = hom[:, :2] / t[:, None]
    return out[0] if single else out


def homography_denominators(H, points):
    """Projective denominator h31*x + h32*y + h33 for each point (no exception)."""
    H = np.asarray(H, dtype=float)
    P = np.atleast_2d(np.asarray(points, dtype=float))
    return P @ H[2, :2] + H[2, 2]


def normalize_homography(H, eps=EPS_T):
    """Rescale H so the bottom-right entry is exactly 1."""
    H = np.asarray(H, dtype=float)
    if abs(H[2, 2]) <= eps:
        raise SingularMatrix("bottom-right entry too close to zero to normalize")
    return H / H[2, 2]


def invert_homography(H, eps_det=EPS_DET, eps=EPS_T):
    """Inverse homography, renormalized to h33 = 1.  Raises SingularMatrix."""
    H = np.asarray(H, dtype=float)
    det = np.linalg.det(H)
    if abs(det) <= eps_det:
        raise SingularMatrix(f"|det| = {abs(det):.3e} <= {eps_det}")
    inv = np.linalg.inv(H)
    if abs(inv[2, 2]) <= eps:
        raise SingularMatrix("inverse cannot be normalized to h33 = 1")
    return inv / inv[2, 2]


def homography_params(H):
    """The 8 free parameters in column-stacked order; assumes h33 = 1."""
    return np.asarray(H, dtype=float).ravel(order="F")[:8].copy()


def homography_from_params(params):
    """Inverse of homography_params: rebuild the 3x3 matrix with h33 = 1."""
    p = np.asarray(params, dtype=float)
    if p.shape != (8,):
        raise ValueError(f"expected 8 parameters, got shape {p.shape}")
    return np.ascontiguousarray(np.append(p, 1.0).reshape(3, 3, order="F"))


def _conditioning_transform(pts):
    # Hartley normalization: centroid to origin, mean distance sqrt(2).
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d <= 0.0:
        raise DegenerateConfiguration("all points coincide")
    s = np.sqrt(2.0) / d
    T = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    return (pts - c) * s, T


def dlt_homography(src, dst, rank_rtol=1e-9):
    """Least-squares homography with src mapped onto dst (direct linear transform).

    Both inputs are (M, 2) with M >= 4.  Solved in Hartley-normalized
    coordinates via the SVD of the stacked 2M x 9 constraint matrix; the
    result is denormalized and scaled to h33 = 1.

    Raises InsufficientPoints for M < 4 and DegenerateConfiguration when the
    constraints do not determine 8 degrees of freedom (e.g. three of four
    source points collinear) or the fitted map has h33 ~ 0.
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.ndim != 2 or src.shape[1] != 2 or src.shape != dst.shape:
        raise ValueError(f"need matching (M, 2) arrays, got {src.shape} and {dst.shape}")
    m = src.shape[0]
    if m < 4:
        raise InsufficientPoints(f"need at least 4 correspondences, got {m}")

    sn, Ts = _conditioning_transform(src)
    dn, Td = _conditioning_transform(dst)

    A = np.zeros((2 * m, 9))
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    A[0::2, 0] = x
    A[0::2, 1] = y
    A[0::2, 2] = 1.0
    A[0::2, 6] = -u * x
    A[0::2, 7] = -u * y
    A[0::2, 8] = -u
    A[1::2, 3] = x
    A[1::2, 4] = y
    A[1::2, 5] = 1.0
    A[1::2, 6] = -v * x
    A[1::2, 7] = -v * y
    A[1::2, 8] = -v

    _, s, Vt = np.linalg.svd(A)
    # Eight singular values for M = 4, nine for M > 4; index 7 must be solidly
    # nonzero either way or the solution direction is not unique.
    if s[7] <= rank_rtol * s[0]:
        raise DegenerateConfiguration("correspondence system is rank deficient")
    Hn = Vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) <= EPS_T:
        raise DegenerateConfiguration("fitted map cannot be normalized to h33 = 1")
    return H / H[2, 2]


def reprojection_distances(H, src, dst, eps=EPS_T):
    """Distances |H(src_i) - dst_i|; inf where src_i maps to infinity."""
    src = np.atleast_2d(np.asarray(src, dtype=float))
    dst = np.atleast_2d(np.asarray(dst, dtype=float))
    hom = src @ np.asarray(H, dtype=float)[:, :2].T + H[:, 2]
    t = hom[:, 2]
    out = np.full(src.shape[0], np.inf)
    ok = np.abs(t) > eps
    proj = hom[ok, :2] / t[ok, None]
    out[ok] = np.sqrt(((proj - dst[ok]) ** 2).sum(axis=1))
    return out


@dataclass(frozen=True)
class RansacParams:
    """Knobs for robust homography fitting."""

    inlier_threshold_px: float = 3.0
    max_iters: int = 2000
    seed: int = 0
    confidence: float = RANSAC_CONFIDENCE


def _minimal_homographies(src4, dst4):
    """Batched exact 4-point homography fits with h33 pinned to 1.

    src4 and dst4 are (B, 4, 2) sample stacks.  Returns ((B, 3, 3)
    candidates, (B,) validity): a sample whose linear system is singular --
    a degenerate configuration -- comes back invalid with an identity
    placeholder.  Precision only has to support inlier counting; the caller
    refits the winner with the full DLT.
    """
    n = src4.shape[0]
    x, y = src4[..., 0], src4[..., 1]
    u, v = dst4[..., 0], dst4[..., 1]
    one = np.ones_like(x)
    zero = np.zeros_like(x)
    rows_u = np.stack([x, y, one, zero, zero, zero, -u * x, -u * y], axis=-1)
    rows_v = np.stack([zero, zero, zero, x, y, one, -v * x, -v * y], axis=-1)
    A = np.concatenate([rows_u, rows_v], axis=1)
    rhs = np.concatenate([u, v], axis=1)
    valid = np.ones(n, dtype=bool)
    try:
        h = np.linalg.solve(A, rhs[:, :, None])[:, :, 0]
    except np.linalg.LinAlgError:
        # rare exactly-singular member: redo one by one, marking the culprits
        h = np.zeros((n, 8))
        for i in range(n):
            try:
                h[i] = np.linalg.solve(A[i], rhs[i])
            except np.linalg.LinAlgError:
                valid[i] = False
    valid &= np.isfinite(h).all(axis=1)
    H = np.empty((n, 3, 3))
    H[:, :2, :] = h[:, :6].reshape(n, 2, 3)
    H[:, 2, :2] = h[:, 6:]
    H[:, 2, 2] = 1.0
    H[~valid] = np.eye(3)
    return H, valid


def ransac_homography(src, dst, inlier_threshold_px=3.0, max_iters=2000, rng_seed=0,
                      confidence=RANSAC_CONFIDENCE):
    """Robust homography from correspondences with >= some outliers.

    Minimal 4-point hypotheses evaluated in vectorized chunks, one-sided
    reprojection distance (|H(src) - dst|) under inlier_threshold_px,
    adaptive iteration count for the given consensus confidence, then a final
    DLT refit over the best consensus set.  Returns (H, inlier_mask) with the
    mask recomputed from the refit model.  Deterministic for a given seed:
    sampling uses the counter-based Philox generator.

    Raises InsufficientPoints (< 4 pairs) and NoConsensus (no hypothesis
    reached 4 inliers).
    """
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    if src.ndim != 2 or src.shape[1] != 2 or src.shape != dst.shape:
        raise ValueError(f"need matching (M, 2) arrays, got {src.shape} and {dst.shape}")
    m = src.shape[0]
    if m < 4:
        raise InsufficientPoints(f"need at least 4 correspondences, got {m}")

    rng = np.random.Generator(np.random.Philox(rng_seed))
    best_count = 0
    best_mask = None
    best_H = None
    needed = max_iters
    done = 0
    chunk = 64
    thr2 = inlier_threshold_px ** 2
    src_h = np.column_stack([src, np.ones(m)])
    while done < min(max_iters, needed):
        b = min(chunk, min(max_iters, needed) - done)
        chunk = 512
        keys = rng.random((b, m))
        samples = np.argpartition(keys, 3, axis=1)[:, :4]
        cand, valid = _minimal_homographies(src[samples], dst[samples])
        hom = np.matmul(src_h, cand.transpose(0, 2, 1))
        t = hom[..., 2]
        front = np.abs(t) > EPS_T
        proj = hom[..., :2] / np.where(front, t, 1.0)[..., None]
        d2 = ((proj - dst) ** 2).sum(axis=-1)
        inliers = front & (d2 < thr2) & valid[:, None]
        counts = inliers.sum(axis=1)
        done += b
        top = int(np.argmax(counts))
        if counts[top] > best_count:
            best_count = int(counts[top])
            best_mask = inliers[top]
            best_H = cand[top]
            w = best_count / m
            if w >= 1.0:
                break
            # Iterations needed so that P(at least one all-inlier sample) >= confidence.
            denom = np.log1p(-(w ** 4))
            if denom < 0.0:
                needed = int(np.ceil(np.log(1.0 - confidence) / denom))

    if best_count < 4 or best_H is None:
        raise NoConsensus(f"best consensus has {best_count} inliers (need >= 4)")

    try:
        refined = dlt_homography(src[best_mask], dst[best_mask])
    except DegenerateConfiguration:
        return best_H, best_mask
    dist = reprojection_distances(refined, src, dst)
    mask = dist < inlier_threshold_px
    if int(mask.sum()) < 4:
        return best_H, best_mask
    return refined, mask


# ---------------------------------------------------------------------------
# Convex polygons.  Vertices are (V, 2) arrays; canonical winding is
# counter-clockwise in a y-up sense (positive shoelace sum).


def signed_area(vertices):
    v = np.asarray(vertices, dtype=float)
    if v.shape[0] < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * (np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def polygon_area(vertices):
    """Absolute shoelace area; 0.0 for fewer than 3 vertices."""
    return abs(signed_area(vertices))


def ensure_ccw(vertices):
    """Same polygon with positive orientation (reversed if needed)."""
    v = np.asarray(vertices, dtype=float)
    return v[::-1].copy() if signed_area(v) < 0.0 else v.copy()


def convex_polygon(vertices):
    """Validate and canonicalize a strictly convex polygon to CCW order.

    Raises ValueError on fewer than 3 vertices, non-finite coordinates, zero
    area, or any non-left turn (collinear runs and bowties both fail).
    """
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[0] < 3 or v.shape[1] != 2:
        raise ValueError(f"expected (V >= 3, 2) vertex array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite vertex coordinate")
    v = ensure_ccw(v)
    e = np.roll(v, -1, axis=0) - v
    en = np.roll(e, -1, axis=0)
    cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
    if not np.all(cross > 0.0):
        raise ValueError("polygon is not strictly convex")
    return v


def clip_polygon(subject, clip):
    """Sutherland-Hodgman intersection of two convex polygons.

    Both inputs are vertex arrays in any winding; the result is the
    intersection's vertices (possibly (0, 2)).  Vertices on a clip edge count
    as inside.
    """
    out = [tuple(p) for p in ensure_ccw(np.asarray(subject, dtype=float))]
    cl = ensure_ccw(np.asarray(clip, dtype=float))
    nc = cl.shape[0]
    for i in range(nc):
        if not out:
            break
        ax, ay = cl[i]
        bx, by = cl[(i + 1) % nc]
        ex, ey = bx - ax, by - ay

        def inside(p):
            return ex * (p[1] - ay) - ey * (p[0] - ax) >= 0.0

        cur = out
        out = []
        for j, p in enumerate(cur):
            q = cur[j - 1]
            pin, qin = inside(p), inside(q)
            if pin != qin:
                # Intersection of segment q-p with the clip line through a-b.
                dq = ex * (q[1] - ay) - ey * (q[0] - ax)
                dp = ex * (p[1] - ay) - ey * (p[0] - ax)
                t = dq / (dq - dp)
                out.append((q[0] + t * (p[0] - q[0]), q[1] + t * (p[1] - q[1])))
            if pin:
                out.append(p)
    return np.array(out, dtype=float).reshape(-1, 2)


def points_in_convex_polygon(points, vertices):
    """Boolean mask of points inside (or on) a convex polygon."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    v = ensure_ccw(np.asarray(vertices, dtype=float))
    e = np.roll(v, -1, axis=0) - v
    rel_x = P[:, None, 0] - v[None, :, 0]
    rel_y = P[:, None, 1] - v[None, :, 1]
    cross = e[None, :, 0] * rel_y - e[None, :, 1] * rel_x
    return np.all(cross >= 0.0, axis=1)
