"""Trial preprocessing: Butterworth bandpass and covariance estimation."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import DegenerateInput, InvalidInput, NumericalFailure


@dataclass(frozen=True)
class Trial:
    """One epoch of multichannel EEG, ``data`` has shape (channels, samples)."""

    data: np.ndarray
    fs: float
    channel_names: tuple[str, ...] | None = None

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise InvalidInput(f"trial data must be 2-D (channels, samples), got shape {data.shape}")
        C, T = data.shape
        if C < 2:
            raise InvalidInput("a trial needs at least two channels")
        if not np.all(np.isfinite(data)):
            raise InvalidInput("trial contains NaN or Inf")
        if self.fs <= 0:
            raise InvalidInput("sampling rate must be positive")
        if self.channel_names is not None and len(self.channel_names) != C:
            raise InvalidInput("channel_names length does not match channel count")
        if T <= C:
            warnings.warn(f"trial has T={T} <= C={C}; covariance may be rank deficient", stacklevel=3)
        object.__setattr__(self, "data", data)

    @property
    def n_channels(self):
        return self.data.shape[0]

    @property
    def n_samples(self):
        return self.data.shape[1]


@dataclass(frozen=True)
class BandpassSpec:
    low_hz: float = 8.0
    high_hz: float = 30.0
    order: int = 5
    zero_phase: bool = True

    def validate(self, fs):
        if self.order < 1:
            raise InvalidInput("filter order must be >= 1")
        if not 0 < self.low_hz < self.high_hz < fs / 2:
            raise InvalidInput(
                f"band [{self.low_hz}, {self.high_hz}] Hz must satisfy 0 < low < high < fs/2 = {fs / 2}"
            )

    @property
    def padlen(self):
        return 3 * (2 * self.order + 1)


def design_bandpass(spec: BandpassSpec, fs):
    """Second-order sections of the Butterworth bandpass for ``fs``.

    scipy designs the analog prototype, prewarps the band edges and maps it
    with the bilinear transform.
    """
    spec.validate(fs)
    sos = sps.butter(spec.order, [spec.low_hz, spec.high_hz], btype="bandpass", fs=fs, output="sos")
    poles = np.concatenate([np.roots(section[3:]) for section in sos])
    if np.any(np.abs(poles) >= 1.0):
        raise NumericalFailure("designed bandpass filter is unstable (pole on or outside unit circle)")
    return sos


def bandpass(X, fs, spec: BandpassSpec | None = None):
    """Filter the last axis of ``X`` (any leading shape) channel by channel.

    Zero-phase mode runs the filter forward and backward after even
    (mirror) padding of ``3 * (2 * order + 1)`` samples at each end.
    """
    spec = spec or BandpassSpec()
    X = np.asarray(X, dtype=float)
    sos = design_bandpass(spec, fs)
    if not spec.zero_phase:
        return sps.sosfilt(sos, X, axis=-1)
    if X.shape[-1] <= spec.padlen:
        raise InvalidInput(f"need more than {spec.padlen} samples for zero-phase filtering, got {X.shape[-1]}")
    return sps.sosfiltfilt(sos, X, axis=-1, padtype="even", padlen=spec.padlen)


def butterworth_bandpass(trial: Trial, spec: BandpassSpec | None = None) -> Trial:
    """Bandpass a single trial, keeping its metadata."""
    return Trial(bandpass(trial.data, trial.fs, spec), trial.fs, trial.channel_names)


def as_array(trial):
    """Raw ``(C, T)`` or ``(n, C, T)`` data from a :class:`Trial` or array."""
    return trial.data if isinstance(trial, Trial) else np.asarray(trial, dtype=float)


def covariances(X):
    """Trace-normalised scatter ``X X' / tr(X X')`` for trials ``(n, C, T)``.

    Trials are not mean-centred.
    """
    X = np.asarray(X, dtype=float)
    S = X @ np.swapaxes(X, -1, -2)
    tr = np.trace(S, axis1=-2, axis2=-1)
    if np.any(tr <= 0):
        raise DegenerateInput("trial with zero signal energy")
    return S / tr[..., None, None]


def trial_covariance(trial):
    """Trace-normalised covariance of one trial (array or :class:`Trial`)."""
    X = as_array(trial)
    if X.ndim != 2:
        raise InvalidInput("expected a single (channels, samples) trial")
    return covariances(X)


def ledoit_wolf_shrinkage(X):
    """Ledoit-Wolf shrinkage intensity for samples in the columns of ``X``.

    ``X`` has shape (C, T); the sample covariance is ``X X' / T`` (no
    centring) and the target is ``tr(S)/C * I``.
    """
    C, T = X.shape
    S = X @ X.T / T
    mu = np.trace(S) / C
    d2 = np.sum((S - mu * np.eye(C)) ** 2)
    if d2 == 0:
        return S, 0.0
    # sum_t ||x_t x_t' - S||_F^2 = sum_t ||x_t||^4 - T ||S||_F^2
    b2_bar = (np.sum(np.sum(X**2, axis=0) ** 2) - T * np.sum(S**2)) / T**2
    b2 = min(b2_bar, d2)
    return S, float(b2 / d2)


def ledoit_wolf_covariance(trial):
    """Ledoit-Wolf shrunk covariance of one trial, trace-normalised."""
    X = as_array(trial)
    if X.ndim != 2:
        raise InvalidInput("expected a single (channels, samples) trial")
    S, rho = ledoit_wolf_shrinkage(X)
    C = S.shape[0]
    tr = np.trace(S)
    if tr <= 0:
        raise DegenerateInput("trial with zero signal energy")
    shrunk = (1 - rho) * S + rho * (tr / C) * np.eye(C)
    return shrunk / np.trace(shrunk)


def ledoit_wolf_covariances(X):
    X = np.asarray(X, dtype=float)
    return np.stack([ledoit_wolf_covariance(x) for x in X])


ESTIMATORS = {"plain": covariances, "ledoit_wolf": ledoit_wolf_covariances}


def estimate_covariances(X, estimator="plain"):
    try:
        fn = ESTIMATORS[estimator]
    except KeyError:
        raise InvalidInput(f"unknown covariance estimator {estimator!r}") from None
    return fn(X)
