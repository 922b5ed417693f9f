"""Exception types shared across the toolkit.

Every failure mode that callers are expected to distinguish gets its own
class; all inherit from :class:`SspeError` so the CLI can map any library
failure to a nonzero exit code.
"""


class SspeError(Exception):
    """Base class for all toolkit errors."""


class DegenerateQuaternionError(SspeError):
    """Quaternion norm too close to zero to normalize."""


class BehindCameraError(SspeError):
    """A 3D point lies on or behind the camera plane (Z <= eps)."""


class ParallelLinesError(SspeError):
    """Two 2D rays are parallel; no unique intersection."""


class ModelParseError(SspeError):
    """Malformed object-model file; message names the offending line."""


class InsufficientGeometryError(SspeError):
    """Too few (or degenerate) points for the requested operation."""


class OcclusionExhaustedError(SspeError):
    """Occlusion removed too many pixels to draw the requested samples."""


class DegenerateGroupError(SspeError):
    """All direction samples in a group are parallel; voting cannot proceed."""


class VotingFailedError(SspeError):
    """Best RANSAC hypothesis fell below the minimum inlier fraction."""


class InsufficientCorrespondencesError(SspeError):
    """Fewer 2D-3D correspondences than the PnP solver requires."""


class DegenerateConfigurationError(SspeError):
    """Rank-deficient PnP design matrix (e.g. coplanar 3D points)."""


class NumericalFailureError(SspeError):
    """Non-finite cost or loss encountered during optimization."""


class ConfigError(SspeError):
    """Inconsistent or invalid configuration (shapes, widths, ranges)."""


class ContractViolationError(SspeError):
    """API contract broken, e.g. a backward pass fed a stale cache."""


class DegenerateFeatureError(SspeError):
    """Feature vector norm too close to zero for cosine similarity."""


class UndefinedMetricError(SspeError):
    """Metric requested on an empty input set."""
