"""Exception hierarchy shared by every module."""


class N2NError(Exception):
    """Base class for all package errors."""


class FormatError(N2NError, ValueError):
    """Malformed file (bad header, truncated chunk, wrong magic)."""


class UnsupportedFormatError(N2NError, ValueError):
    pass


class EmptyBufferError(N2NError, ValueError):
    pass


class DegenerateSignalError(N2NError, ValueError):
    """Signal is silent (all zero) where energy is required."""


class SizeError(N2NError, ValueError):
    pass


class ShapeError(N2NError, ValueError):
    pass


class AlignmentError(N2NError, ValueError):
    """Paired signals or file sets do not line up."""


class ConfigError(N2NError, ValueError):
    pass


class MissingEstimateError(N2NError, ValueError):
    pass


class InsufficientStatisticsError(N2NError, ValueError):
    pass


class NumericFaultError(N2NError, FloatingPointError):
    """NaN or Inf appeared during a training step."""
