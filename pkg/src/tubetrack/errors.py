"""Exception types raised across the package.

Plain invalid arguments raise ``ValueError``; the classes below cover the
failure modes callers are expected to tell apart.
"""


class TubeTrackError(Exception):
    """Base class for package-specific errors."""


class ConfigError(TubeTrackError, ValueError):
    """A configuration value is out of range or inconsistent."""


class NumericRangeError(TubeTrackError, ArithmeticError):
    """A prediction decodes to a value outside the representable range."""


class UnderdeterminedError(TubeTrackError, ValueError):
    """Too few usable samples to fit a motion model."""


class ContractError(TubeTrackError, RuntimeError):
    """An internal precondition between two components was violated."""


class SequenceError(TubeTrackError, RuntimeError):
    """Windows were fed to the tracker out of order."""


class FormatError(TubeTrackError, ValueError):
    """A file does not follow the expected layout."""
