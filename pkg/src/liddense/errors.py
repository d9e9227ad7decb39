"""Exception types shared across the toolkit."""


class LidDenseError(Exception):
    """Base class for all toolkit errors."""


class DepthFormatError(LidDenseError):
    """A raster or file violates a format requirement (bit depth, channels, ...)."""


class DepthRangeError(LidDenseError):
    """A depth value is outside the representable range."""


class DimensionMismatchError(LidDenseError):
    """Two rasters that must share dimensions do not."""


class EmptyInputError(LidDenseError):
    """An operation that needs at least one valid pixel received none."""


class GeometryDomainError(LidDenseError):
    """A geometric quantity is outside its domain (zero-norm point, ...)."""


class SamplingExhaustedError(LidDenseError):
    """Rejection sampling failed to find enough valid candidates."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class ColinearTripleError(LidDenseError):
    """Three points meant to span a plane are (numerically) colinear."""


class NonPositiveDepthError(LidDenseError):
    """A prediction is zero or negative where a positive depth is required."""


class CalibrationError(LidDenseError):
    """A calibration file is missing or malformed."""


class CheckpointError(LidDenseError):
    """A parameter checkpoint cannot be parsed or does not match the model."""


class DivergenceError(LidDenseError):
    """Training produced a non-finite loss."""
