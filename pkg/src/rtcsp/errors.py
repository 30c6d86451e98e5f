"""Exception hierarchy shared by every rtcsp module."""


class RtcspError(Exception):
    """Base class for all errors raised by rtcsp."""


class InvalidInput(RtcspError, ValueError):
    """Argument has the wrong shape, type or value."""


class DomainError(RtcspError, ValueError):
    """Matrix lies outside the domain of the requested operation (not SPD)."""


class DegenerateInput(RtcspError, ValueError):
    """Data is valid but too degenerate to estimate the requested quantity."""


class MissingClassError(InvalidInput):
    """A class label required by the operation is absent from one of the sets."""


class NumericalFailure(RtcspError, ArithmeticError):
    """An iterative or factorisation routine did not produce a usable result."""


class FormatError(RtcspError, ValueError):
    """A data file does not match its declared layout."""


class IoError(RtcspError, OSError):
    """A referenced file is missing or unreadable."""


class ConfigError(InvalidInput):
    """Experiment or dataset configuration failed validation."""
