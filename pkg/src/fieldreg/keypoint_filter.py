"""Linear Kalman filter over stacked image-keypoint positions.

State is the 2N vector (x0, y0, x1, y1, ...) over every template keypoint,
driven by the global AffineSimilarity motion and corrected with whichever
keypoints the detector produced this frame.  Keypoints never seen yet carry a
zero mean/covariance block and are masked out via measured_ever; their blocks
are initialized directly from the first observation.
"""

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    DimensionMismatch,
    SingularInnovation,
    UnknownKeypointId,
)
from .motion import AffineSimilarity


@dataclass(frozen=True)
class MeasurementFrame:
    """Detector output for one frame: keypoint indices and pixel positions."""

    frame_index: int
    ids: np.ndarray        # (K,) canonical template indices, unique
    positions: np.ndarray  # (K, 2) pixels

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=int).reshape(-1)
        pos = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "positions", pos)
        if pos.shape[0] != ids.size:
            raise ValueError(f"{ids.size} ids with {pos.shape[0]} positions")
        if ids.size and len(set(ids.tolist())) != ids.size:
            raise ValueError("duplicate keypoint ids within a frame")
        if ids.size and ids.min() < 0:
            raise UnknownKeypointId(f"negative keypoint index {ids.min()}")
        if not np.all(np.isfinite(pos)):
            raise ValueError("non-finite measurement position")

    @classmethod
    def from_pairs(cls, frame_index, observations):
        obs = list(observations)
        ids = [o[0] for o in obs]
        pos = [o[1] for o in obs]
        return cls(frame_index, np.array(ids, dtype=int).reshape(-1),
                   np.array(pos, dtype=float).reshape(-1, 2))

    @property
    def k(self):
        return self.ids.size


def _check_block_array(name, arr, n):
    a = np.asarray(arr, dtype=float)
    if a.shape != (n, 2, 2):
        raise DimensionMismatch(f"{name} must have shape ({n}, 2, 2), got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"non-finite entries in {name}")
    if np.max(np.abs(a - a.transpose(0, 2, 1))) > 1e-9:
        raise ValueError(f"{name} blocks must be symmetric")
    if np.any(a[:, 0, 0] < 0) or np.any(a[:, 1, 1] < 0):
        raise ValueError(f"{name} blocks must have nonnegative diagonals")
    return a


@dataclass(frozen=True)
class NoiseConfig:
    """Per-keypoint 2x2 process and measurement covariance blocks."""

    process: np.ndarray      # (N, 2, 2)
    measurement: np.ndarray  # (N, 2, 2)

    def __post_init__(self):
        proc = _check_block_array("process", self.process, np.asarray(self.process).shape[0])
        meas = _check_block_array("measurement", self.measurement, proc.shape[0])
        object.__setattr__(self, "process", proc)
        object.__setattr__(self, "measurement", meas)

    @classmethod
    def uniform(cls, n, process, measurement):
        """Same 2x2 blocks for every keypoint."""
        return cls(np.tile(np.asarray(process, dtype=float), (n, 1, 1)),
                   np.tile(np.asarray(measurement, dtype=float), (n, 1, 1)))

    @property
    def n(self):
        return self.process.shape[0]

    def full_process_cov(self):
        """Block-diagonal (2N, 2N) process covariance."""
        n = self.n
        Q = np.zeros((2 * n, 2 * n))
        for j in range(n):
            Q[2 * j:2 * j + 2, 2 * j:2 * j + 2] = self.process[j]
        return Q


@dataclass(frozen=True)
class KeypointFilterState:
    mean: np.ndarray           # (2N,)
    cov: np.ndarray            # (2N, 2N)
    measured_ever: np.ndarray  # (N,) bool
    measured_now: np.ndarray   # (N,) bool

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        ever = np.asarray(self.measured_ever, dtype=bool)
        now = np.asarray(self.measured_now, dtype=bool)
        for nm, v in (("mean", mean), ("cov", cov), ("measured_ever", ever), ("measured_now", now)):
            object.__setattr__(self, nm, v)
        n2 = mean.shape[0]
        if n2 % 2 or cov.shape != (n2, n2) or ever.shape != (n2 // 2,) or now.shape != ever.shape:
            raise DimensionMismatch(
                f"inconsistent state shapes: mean {mean.shape}, cov {cov.shape}, "
                f"masks {ever.shape}/{now.shape}")

    @property
    def n(self):
        return self.mean.shape[0] // 2

    def keypoint_means(self):
        """(N, 2) view of the stacked mean."""
        return self.mean.reshape(-1, 2)


def init_keypoint_state(n):
    """Empty state: nothing measured, zero mean and covariance."""
    return KeypointFilterState(
        mean=np.zeros(2 * n),
        cov=np.zeros((2 * n, 2 * n)),
        measured_ever=np.zeros(n, dtype=bool),
        measured_now=np.zeros(n, dtype=bool),
    )


def init_keypoint_state_from_positions(positions, noise):
    """State with every keypoint pre-initialized at the given (N, 2) positions.

    Covariance blocks come from the measurement noise, the same convention as
    first-observation initialization.  Used by the init-everything-through-
    the-initial-homography pipeline variant.
    """
    pos = np.asarray(positions, dtype=float)
    n = noise.n
    if pos.shape != (n, 2):
        raise DimensionMismatch(f"positions {pos.shape} vs {n} noise blocks")
    cov = np.zeros((2 * n, 2 * n))
    for j in range(n):
        cov[2 * j:2 * j + 2, 2 * j:2 * j + 2] = noise.measurement[j]
    return KeypointFilterState(
        mean=pos.ravel().copy(),
        cov=cov,
        measured_ever=np.ones(n, dtype=bool),
        measured_now=np.zeros(n, dtype=bool),
    )


def _coord_idx(ids):
    """Interleaved coordinate indices (2j, 2j+1, ...) for keypoint indices."""
    ids = np.asarray(ids, dtype=int)
    out = np.empty(2 * ids.size, dtype=int)
    out[0::2] = 2 * ids
    out[1::2] = 2 * ids + 1
    return out


def lkf_predict(state, motion, noise):
    """Propagate every keypoint through the global motion and inflate by process noise.

    mean_j <- A mean_j + t for each keypoint; cov <- blockdiag(A) cov
    blockdiag(A)^T + Q.  Keypoint independence is preserved: zero off-diagonal
    blocks stay exactly zero.  Masks are untouched.
    """
    if not isinstance(motion, AffineSimilarity):
        raise TypeError(f"motion must be an AffineSimilarity, got {type(motion)!r}")
    n = state.n
    if noise.n != n:
        raise DimensionMismatch(f"state has {n} keypoints, noise has {noise.n}")

    mean = (state.keypoint_means() @ motion.linear.T + motion.translation).ravel()
    F = np.kron(np.eye(n), motion.linear)
    cov = F @ state.cov @ F.T + noise.full_process_cov()
    cov = 0.5 * (cov + cov.T)
    return replace(state, mean=mean, cov=cov,
                   measured_ever=state.measured_ever.copy(),
                   measured_now=state.measured_now.copy())


def lkf_update(state, frame, noise):
    """Fuse one frame of detections.

    Keypoints observed for the first time are initialized directly: mean from
    the observation, covariance block from that keypoint's measurement noise
    (the covariance-at-first-observation convention of this package).
    Previously seen keypoints get a standard Kalman update through a selection
    measurement matrix, Joseph-form covariance.  measured_now is rewritten to
    exactly this frame's ids; measured_ever accumulates.

    Raises UnknownKeypointId for out-of-range indices and SingularInnovation
    when the innovation covariance is not positive definite.
    """
    n = state.n
    if noise.n != n:
        raise DimensionMismatch(f"state has {n} keypoints, noise has {noise.n}")
    ids = frame.ids
    if ids.size and ids.max() >= n:
        raise UnknownKeypointId(f"keypoint index {ids.max()} out of range for {n} keypoints")

    measured_now = np.zeros(n, dtype=bool)
    measured_now[ids] = True
    measured_ever = state.measured_ever | measured_now

    if ids.size == 0:
        return replace(state, mean=state.mean.copy(), cov=state.cov.copy(),
                       measured_ever=measured_ever, measured_now=measured_now)

    new_mask = ~state.measured_ever[ids]
    new_ids = ids[new_mask]
    known_ids = ids[~new_mask]

    mean = state.mean.copy()
    cov = state.cov.copy()

    if known_ids.size:
        ci = _coord_idx(known_ids)
        y = frame.positions[~new_mask].ravel()
        R = np.zeros((ci.size, ci.size))
        for r, j in enumerate(known_ids):
            R[2 * r:2 * r + 2, 2 * r:2 * r + 2] = noise.measurement[j]
        S = cov[np.ix_(ci, ci)] + R
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise SingularInnovation(
                "innovation covariance is not positive definite") from None
        K = np.linalg.solve(S, cov[ci, :]).T          # P H^T S^-1, (2N, 2K)
        mean = mean + K @ (y - mean[ci])
        A = np.eye(2 * n)
        A[:, ci] -= K                                  # I - K H for a selection H
        cov = A @ cov @ A.T + K @ R @ K.T

    for r, j in enumerate(ids):
        if not new_mask[r]:
            continue
        sl = slice(2 * j, 2 * j + 2)
        mean[sl] = frame.positions[r]
        cov[sl, :] = 0.0
        cov[:, sl] = 0.0
        cov[sl, sl] = noise.measurement[j]

    cov = 0.5 * (cov + cov.T)
    return replace(state, mean=mean, cov=cov,
                   measured_ever=measured_ever, measured_now=measured_now)
