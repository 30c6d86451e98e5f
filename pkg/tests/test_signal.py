import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal as sps
from sklearn.covariance import ledoit_wolf

from rtcsp.errors import DegenerateInput, InvalidInput, NumericalFailure
from rtcsp.signal import (
    BandpassSpec,
    Trial,
    bandpass,
    butterworth_bandpass,
    covariances,
    design_bandpass,
    estimate_covariances,
    ledoit_wolf_covariance,
    ledoit_wolf_shrinkage,
    trial_covariance,
)

FS = 250.0


def sine(freq, n=2000, fs=FS, channels=2):
    t = np.arange(n) / fs
    return np.tile(np.sin(2 * np.pi * freq * t), (channels, 1))


# ---------------------------------------------------------------- Trial
def test_trial_validation():
    with pytest.raises(InvalidInput):
        Trial(np.zeros(10), FS)
    with pytest.raises(InvalidInput):
        Trial(np.zeros((1, 10)), FS)
    with pytest.raises(InvalidInput):
        Trial(np.full((2, 10), np.nan), FS)
    with pytest.raises(InvalidInput):
        Trial(np.zeros((2, 10)), 0.0)
    with pytest.warns(UserWarning):
        Trial(np.ones((4, 3)), FS)


# ---------------------------------------------------------------- bandpass
def test_passband_sinusoid_keeps_amplitude():
    y = butterworth_bandpass(Trial(sine(20.0), FS)).data
    core = y[:, 300:-300]
    assert abs(np.abs(core).max() - 1.0) < 0.01


def test_stopband_sinusoid_attenuated():
    x = sine(2.0)
    y = bandpass(x, FS)
    sos = design_bandpass(BandpassSpec(), FS)
    _, h = sps.sosfreqz(sos, worN=[2.0], fs=FS)
    oracle = np.abs(h[0]) ** 2  # forward-backward squares the magnitude
    ratio = np.sqrt(np.mean(y[:, 300:-300] ** 2) / np.mean(x**2))
    assert ratio < 0.05
    assert ratio == pytest.approx(oracle, abs=1e-3)


def test_dc_removed():
    x = np.full((2, 1500), 3.0)
    y = bandpass(x, FS)
    assert np.abs(y.mean(axis=1)).max() < 1e-6 * 3.0


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**32 - 1))
def test_bandpass_linear(a, b, seed):
    rng = np.random.default_rng(seed)
    X, Y = rng.standard_normal((2, 3, 400))
    lhs = bandpass(a * X + b * Y, FS)
    rhs = a * bandpass(X, FS) + b * bandpass(Y, FS)
    assert np.abs(lhs - rhs).max() <= 1e-9 * max(1.0, np.abs(rhs).max())


def test_zero_phase_has_no_lag():
    x = sine(15.0, n=1500)[0]
    y = bandpass(x[None], FS)[0]
    lags = np.arange(-20, 21)
    xc = [np.dot(y[300 + k : -300 + k], x[300:-300]) for k in lags]
    assert lags[int(np.argmax(xc))] == 0


def test_causal_mode_runs_and_differs():
    x = sine(15.0, n=1000)
    y0 = bandpass(x, FS, BandpassSpec(zero_phase=True))
    y1 = bandpass(x, FS, BandpassSpec(zero_phase=False))
    assert y1.shape == x.shape
    assert not np.allclose(y0, y1)


@pytest.mark.parametrize("spec", [BandpassSpec(8, 130), BandpassSpec(0, 30), BandpassSpec(30, 8), BandpassSpec(order=0)])
def test_invalid_band(spec):
    with pytest.raises(InvalidInput):
        bandpass(np.zeros((2, 500)), FS, spec)


def test_unstable_design_detected(monkeypatch):
    unstable = np.array([[1.0, 0.0, 0.0, 1.0, 0.0, -4.0]])
    monkeypatch.setattr(sps, "butter", lambda *a, **k: unstable)
    with pytest.raises(NumericalFailure):
        design_bandpass(BandpassSpec(), FS)


def test_short_trial_rejected_for_zero_phase():
    with pytest.raises(InvalidInput):
        bandpass(np.ones((2, 20)), FS)


# ---------------------------------------------------------------- covariance
def test_orthogonal_rows_give_scaled_identity(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((50, 4)))
    C = trial_covariance(Q.T)
    np.testing.assert_allclose(C, np.eye(4) / 4, atol=1e-15)


def test_covariance_oracle_and_trace(rng):
    X = rng.standard_normal((4, 100)) * 7
    S = X @ X.T
    C = trial_covariance(Trial(X, FS))
    assert np.abs(C - S / np.trace(S)).max() < 1e-12
    assert abs(np.trace(C) - 1) < 1e-12


def test_zero_trial_is_degenerate():
    with pytest.raises(DegenerateInput):
        trial_covariance(np.zeros((3, 50)))
    with pytest.raises(DegenerateInput):
        ledoit_wolf_covariance(np.zeros((3, 50)))


def test_batch_matches_single(rng):
    X = rng.standard_normal((5, 3, 40))
    batch = covariances(X)
    for x, c in zip(X, batch):
        np.testing.assert_allclose(c, trial_covariance(x), rtol=1e-14)


# ---------------------------------------------------------------- Ledoit-Wolf
def test_shrinkage_matches_sklearn(rng):
    for C, T in [(3, 20), (8, 30), (4, 1000), (10, 12)]:
        X = rng.standard_normal((C, T)) * rng.uniform(0.5, 2, (C, 1))
        _, rho = ledoit_wolf_shrinkage(X)
        ref_cov, ref_rho = ledoit_wolf(X.T, assume_centered=True)
        assert rho == pytest.approx(ref_rho, rel=1e-10, abs=1e-14)
        ours = ledoit_wolf_covariance(X)
        np.testing.assert_allclose(ours, ref_cov / np.trace(ref_cov), rtol=1e-10, atol=1e-14)


def test_lw_large_sample_close_to_plain(rng):
    C = 4
    A = rng.standard_normal((C, C)) + 3 * np.eye(C)
    X = A @ rng.standard_normal((C, 10 * C * C))
    lw, plain = ledoit_wolf_covariance(X), trial_covariance(X)
    assert np.linalg.norm(lw - plain) / np.linalg.norm(plain) < 0.05


def test_lw_restores_rank():
    rng = np.random.default_rng(1)
    x = rng.standard_normal(200)
    X = np.vstack([x, x])
    assert np.linalg.eigvalsh(trial_covariance(X)).min() < 1e-12
    assert np.linalg.eigvalsh(ledoit_wolf_covariance(X)).min() > 0


def test_lw_iid_normal_near_identity(rng):
    X = rng.standard_normal((4, 1000))
    lw = ledoit_wolf_covariance(X)
    assert np.linalg.norm(lw - np.eye(4) / 4) / np.linalg.norm(np.eye(4) / 4) < 0.10
    assert abs(np.trace(lw) - 1) < 1e-12


def test_estimators(rng):
    X = rng.standard_normal((3, 4, 60))
    for name in ("plain", "ledoit_wolf"):
        covs = estimate_covariances(X, name)
        np.testing.assert_allclose(np.trace(covs, axis1=1, axis2=2), 1.0, atol=1e-12)
        assert np.linalg.eigvalsh(covs).min() > 0
    with pytest.raises(InvalidInput):
        estimate_covariances(X, "oas")
