"""Exception types raised by the camoflow pipeline.

Every camoflow-specific failure derives from :class:`CamoflowError` so that
callers (and the CLI) can separate expected input/data problems from genuine
bugs with a single ``except`` clause.
"""

from __future__ import annotations


class CamoflowError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateConfigurationError(CamoflowError):
    """The input geometry does not determine a unique homography.

    Raised when the DLT system has a (near) two-dimensional null space,
    e.g. because the weighted correspondences are collinear or coincident,
    or when a quadrilateral handed to ``quad_to_homography`` is degenerate.
    """


class InsufficientSupportError(CamoflowError):
    """Too few effective correspondences to fit a model.

    A homography needs at least four correspondences whose weights exceed
    the weight floor, and a strictly positive total weight.
    """


class NoModelFoundError(CamoflowError):
    """RANSAC exhausted its iteration budget without a usable consensus."""


class PointAtInfinityError(CamoflowError):
    """A homography mapped a finite point to the plane at infinity."""


class NonInvertibleHomographyError(CamoflowError):
    """A homography is numerically singular and cannot be inverted."""


class FlowFormatError(CamoflowError):
    """A ``.flo`` file is malformed: bad magic, truncated, or absurd dims."""


class ConfigError(CamoflowError):
    """A configuration value or file is invalid (unknown key, bad range)."""


class PipelineError(CamoflowError):
    """A per-frame pipeline stage failed; carries the offending pair index."""

    def __init__(self, message: str, frame_index: int | None = None):
        super().__init__(message)
        self.frame_index = frame_index
