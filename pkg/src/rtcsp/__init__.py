"""Riemannian transfer learning for CSP-based EEG decoding."""

from .errors import (
    ConfigError,
    DegenerateInput,
    DomainError,
    FormatError,
    InvalidInput,
    IoError,
    MissingClassError,
    NumericalFailure,
    RtcspError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DegenerateInput",
    "DomainError",
    "FormatError",
    "InvalidInput",
    "IoError",
    "MissingClassError",
    "NumericalFailure",
    "RtcspError",
]
