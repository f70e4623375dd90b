"""Exception types shared across the package."""


class FieldRegError(Exception):
    """Base class for all errors raised by this package."""


class PointAtInfinity(FieldRegError):
    """Homogeneous point has (near-)zero scale and no Euclidean image."""


class SingularMatrix(FieldRegError):
    """Matrix is singular, or a homography cannot be normalized to h33 = 1."""


class InsufficientPoints(FieldRegError):
    """Fewer input points than the operation's minimum."""


class DegenerateConfiguration(FieldRegError):
    """Input geometry does not determine the model (collinear, coincident, rank deficient)."""


class NoConsensus(FieldRegError):
    """RANSAC found no acceptable consensus set."""


class DimensionMismatch(FieldRegError):
    """Array sizes disagree with the state or with each other."""


class UnknownKeypointId(FieldRegError):
    """Keypoint id or index not covered by the field template / filter state."""


class SingularInnovation(FieldRegError):
    """Innovation covariance is not invertible (or too ill conditioned to trust)."""


class NumericalDegeneracy(FieldRegError):
    """A projective denominator vanished where the math needs it finite."""


class NoSamples(FieldRegError):
    """A covariance estimator received zero usable samples."""


class EmptyVisibleRegion(FieldRegError):
    """No template keypoint projects into the image."""


class DegenerateProjection(FieldRegError):
    """A mapped quadrilateral left the valid projective region (vertex at/behind infinity, non-convex)."""


class NoMatchedKeypoints(FieldRegError):
    """Metric needs matched detection/ground-truth ids and found none."""


class FrameMismatch(FieldRegError):
    """Prediction and ground-truth files cover different frame sets."""


class NoInitializableFrame(FieldRegError):
    """Sequence ended before any frame allowed filter initialization."""


class DegenerateHomography(FieldRegError):
    """Simulated homography chain left the valid region (singular or unnormalizable)."""


class FormatError(FieldRegError):
    """Malformed input file.  Carries the offending path and line number when known."""

    def __init__(self, message, path=None, line=None):
        loc = ""
        if path is not None:
            loc = f"{path}: "
        if line is not None:
            loc = f"{loc}line {line}: "
        super().__init__(loc + message)
        self.path = path
        self.line = line
