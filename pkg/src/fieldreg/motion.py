"""Global inter-frame camera motion as a 4-DOF similarity (rotation, scale, translation).

The transform keeps its last matrix row at exactly (0, 0, 1), which is what
lets it commute with homogeneous normalization and drive the homography
recursion H_t = A_t H_{t-1} without re-projection error.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfiguration, InsufficientPoints, NoConsensus

MAD_MULTIPLIER = 3.0


@dataclass(frozen=True)
class AffineSimilarity:
    """x' = s R(theta) x + t, stored as a = s cos(theta), b = s sin(theta), t = (tx, ty)."""

    a: float
    b: float
    tx: float
    ty: float

    def __post_init__(self):
        vals = (self.a, self.b, self.tx, self.ty)
        if not all(np.isfinite(vals)):
            raise ValueError(f"non-finite similarity parameters {vals}")
        if self.a * self.a + self.b * self.b <= 0.0:
            raise ValueError("zero scale similarity is not invertible")

    @classmethod
    def identity(cls):
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_params(cls, angle=0.0, scale=1.0, translation=(0.0, 0.0)):
        return cls(scale * np.cos(angle), scale * np.sin(angle),
                   float(translation[0]), float(translation[1]))

    @property
    def scale(self):
        return float(np.hypot(self.a, self.b))

    @property
    def angle(self):
        return float(np.arctan2(self.b, self.a))

    @property
    def linear(self):
        return np.array([[self.a, -self.b], [self.b, self.a]])

    @property
    def translation(self):
        return np.array([self.tx, self.ty])

    def as_matrix(self):
        """3x3 homogeneous form; the last row is exactly (0, 0, 1)."""
        return np.array([
            [self.a, -self.b, self.tx],
            [self.b, self.a, self.ty],
            [0.0, 0.0, 1.0],
        ])

    def transform(self, points):
        """Apply to a (2,) point or (N, 2) array."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        P = np.atleast_2d(pts)
        out = P @ self.linear.T + self.translation
        return out[0] if single else out

    def compose(self, other):
        """self after other: (self.compose(other)).transform(x) == self.transform(other.transform(x))."""
        return AffineSimilarity(
            self.a * other.a - self.b * other.b,
            self.a * other.b + self.b * other.a,
            self.a * other.tx - self.b * other.ty + self.tx,
            self.b * other.tx + self.a * other.ty + self.ty,
        )

    def inverse(self):
        s2 = self.a * self.a + self.b * self.b
        ia, ib = self.a / s2, -self.b / s2
        return AffineSimilarity(
            ia, ib,
            -(ia * self.tx - ib * self.ty),
            -(ib * self.tx + ia * self.ty),
        )

    def params(self):
        return np.array([self.a, self.b, self.tx, self.ty])


def fit_similarity(prev_pts, curr_pts):
    """Least-squares AffineSimilarity mapping prev_pts onto curr_pts.

    Linear in (a, b, tx, ty); needs >= 2 pairs and at least 2 distinct source
    points.  Raises InsufficientPoints / DegenerateConfiguration.
    """
    prev_pts = np.asarray(prev_pts, dtype=float)
    curr_pts = np.asarray(curr_pts, dtype=float)
    if prev_pts.ndim != 2 or prev_pts.shape[1] != 2 or prev_pts.shape != curr_pts.shape:
        raise ValueError(
            f"need matching (M, 2) arrays, got {prev_pts.shape} and {curr_pts.shape}")
    m = prev_pts.shape[0]
    if m < 2:
        raise InsufficientPoints(f"need at least 2 pairs, got {m}")

    A = np.zeros((2 * m, 4))
    px, py = prev_pts[:, 0], prev_pts[:, 1]
    A[0::2, 0] = px
    A[0::2, 1] = -py
    A[0::2, 2] = 1.0
    A[1::2, 0] = py
    A[1::2, 1] = px
    A[1::2, 3] = 1.0
    rhs = curr_pts.ravel()
    sol, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    if rank < 4:
        raise DegenerateConfiguration("source points do not determine a similarity")
    a, b, tx, ty = sol
    if a * a + b * b <= 0.0:
        raise DegenerateConfiguration("fit collapsed to zero scale")
    return AffineSimilarity(float(a), float(b), float(tx), float(ty))


def estimate_global_motion(prev_pts, curr_pts, inlier_threshold_px=1.5, max_iters=500,
                           rng_seed=0, mad_multiplier=MAD_MULTIPLIER, confidence=0.99):
    """Robust global motion from (possibly contaminated) point correspondences.

    Two stages: (i) drop pairs whose displacement sits farther from the median
    displacement than mad_multiplier times the median absolute deviation;
    (ii) RANSAC over 2-point similarity hypotheses with a final least-squares
    refit over the consensus.  Returns (AffineSimilarity, inlier_mask) with
    the mask in input order (MAD-discarded pairs are False).

    The pairs are sorted canonically before sampling, so the result does not
    depend on input order for a fixed seed.  Raises InsufficientPoints and
    NoConsensus (callers typically fall back to identity and flag the frame).
    """
    prev_pts = np.asarray(prev_pts, dtype=float)
    curr_pts = np.asarray(curr_pts, dtype=float)
    if prev_pts.ndim != 2 or prev_pts.shape[1] != 2 or prev_pts.shape != curr_pts.shape:
        raise ValueError(
            f"need matching (M, 2) arrays, got {prev_pts.shape} and {curr_pts.shape}")
    n = prev_pts.shape[0]
    if n < 2:
        raise InsufficientPoints(f"need at least 2 pairs, got {n}")

    order = np.lexsort((curr_pts[:, 1], curr_pts[:, 0], prev_pts[:, 1], prev_pts[:, 0]))
    p = prev_pts[order]
    c = curr_pts[order]

    disp = c - p
    med = np.median(disp, axis=0)
    r = np.sqrt(((disp - med) ** 2).sum(axis=1))
    thresh = mad_multiplier * np.median(r)
    if thresh <= 0.0:
        thresh = 1e-9  # all displacements identical up to noise below any MAD
    keep = r <= thresh
    kept_idx = np.flatnonzero(keep)
    if kept_idx.size < 2:
        kept_idx = np.arange(n)
        keep = np.ones(n, dtype=bool)

    kp, kc = p[kept_idx], c[kept_idx]
    mk = kept_idx.size
    rng = np.random.Generator(np.random.Philox(rng_seed))
    best_count = 0
    best_inliers = None
    needed = max_iters
    it = 0
    while it < min(max_iters, needed):
        it += 1
        i, j = rng.choice(mk, size=2, replace=False)
        if np.all(kp[i] == kp[j]):
            continue
        try:
            cand = fit_similarity(kp[[i, j]], kc[[i, j]])
        except DegenerateConfiguration:
            continue
        res = np.sqrt(((cand.transform(kp) - kc) ** 2).sum(axis=1))
        inl = res < inlier_threshold_px
        count = int(inl.sum())
        if count > best_count:
            best_count = count
            best_inliers = inl
            w = count / mk
            if w >= 1.0:
                break
            denom = np.log1p(-(w ** 2))
            if denom < 0.0:
                needed = int(np.ceil(np.log(1.0 - confidence) / denom))

    if best_count < 2 or best_inliers is None:
        raise NoConsensus(f"best consensus has {best_count} pairs (need >= 2)")

    model = fit_similarity(kp[best_inliers], kc[best_inliers])
    res = np.sqrt(((model.transform(p) - c) ** 2).sum(axis=1))
    mask_sorted = keep & (res < inlier_threshold_px)

    mask = np.zeros(n, dtype=bool)
    mask[order] = mask_sorted
    return model, mask
