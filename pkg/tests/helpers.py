"""Shared builders for the test suite."""

import numpy as np

from fieldreg import ImageDims, standard_soccer_template
from fieldreg.geometry import dlt_homography

TEMPLATE = standard_soccer_template()
DIMS = ImageDims(1280, 720)


def view_homography(rng=None, dims=DIMS, template=TEMPLATE, jitter_px=0.0):
    """Field-to-image homography with a broadcast-style perspective.

    Maps the field rectangle onto a convex trapezoid well inside the image.
    With jitter_px > 0 the trapezoid corners move by uniform +-jitter_px
    (keep it under ~40 to preserve convexity and visibility).
    """
    w, h = float(dims.width_px), float(dims.height_px)
    quad = np.array([
        [0.17 * w, 0.18 * h],
        [0.83 * w, 0.18 * h],
        [0.97 * w, 0.92 * h],
        [0.03 * w, 0.92 * h],
    ])
    if jitter_px:
        if rng is None:
            raise ValueError("jitter needs an rng")
        quad = quad + rng.uniform(-jitter_px, jitter_px, size=(4, 2))
    return dlt_homography(template.corners(), quad)


def random_homography(rng, spread=0.3):
    """Well-conditioned random homography with O(1) entries, h33 = 1."""
    while True:
        H = np.eye(3) + rng.uniform(-spread, spread, size=(3, 3))
        H[2, 2] = 1.0
        if abs(np.linalg.det(H)) > 0.1:
            return H


def fd_jacobian(f, x, step=1e-6):
    """Central-difference Jacobian of f: R^n -> R^m at x."""
    x = np.asarray(x, dtype=float)
    y0 = np.asarray(f(x))
    J = np.zeros((y0.size, x.size))
    for j in range(x.size):
        hi = x.copy()
        lo = x.copy()
        hi[j] += step
        lo[j] -= step
        J[:, j] = (np.asarray(f(hi)) - np.asarray(f(lo))) / (2.0 * step)
    return J
