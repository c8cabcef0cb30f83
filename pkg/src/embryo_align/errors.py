"""Exception hierarchy shared across the package.

Every error raised on purpose derives from AlignError so callers can catch
one base class at the CLI boundary.
"""

from __future__ import annotations


class AlignError(Exception):
    """Base class for all package errors."""


class ArgumentError(AlignError):
    """An argument value is out of its documented domain."""


class ShapeError(AlignError):
    """Array dimensions or grid geometry do not match what an operation needs."""


class MaskValueError(AlignError):
    """A mask payload contains values other than 0 and 1."""


class EmptyMaskError(AlignError):
    """A mask has no foreground voxels where at least one is required."""


class DegenerateShapeError(AlignError):
    """A point cloud is rank-deficient and has no usable principal frame."""


class DegenerateInputError(AlignError):
    """A statistic is undefined for the input (for example zero variance)."""


class TransformError(AlignError):
    """A rigid transform fails its orthogonality or determinant checks."""


class ParseError(AlignError):
    """A file does not conform to the expected format."""


class TruncationError(ParseError):
    """A file payload is shorter or longer than its header promises."""


class ModelShapeError(AlignError):
    """A feature vector does not match the model's expected input length."""


class DegenerateWarning(UserWarning):
    """Emitted when principal axes are nearly ambiguous (close singular values)."""
