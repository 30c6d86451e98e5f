import numpy as np
import pytest
from scipy.linalg import eigh

from conftest import random_spd
from rtcsp.csp import (
    SpatialFilter,
    binary_tasks,
    class_mean_covariance,
    csp_filters,
    features_from_scatter,
    fit_csp,
    log_variance_features,
    ovr_tasks,
)
from rtcsp.errors import DegenerateInput, DomainError, InvalidInput


# ---------------------------------------------------------------- class means
def test_class_mean_single_and_duplicate(rng):
    A = random_spd(rng, 3)
    np.testing.assert_array_equal(class_mean_covariance([A], [1], 1), A)
    np.testing.assert_allclose(class_mean_covariance([A, A], [2, 2], 2), A, rtol=1e-15)


def test_class_mean_oracle(rng):
    covs = np.stack([random_spd(rng, 4) for _ in range(7)])
    y = np.array([1, 2, 1, 1, 2, 2, 1])
    expected = sum(c for c, l in zip(covs, y) if l == 1) / 4
    assert np.abs(class_mean_covariance(covs, y, 1) - expected).max() < 1e-14


def test_class_mean_empty_class():
    with pytest.raises(InvalidInput):
        class_mean_covariance([np.eye(2)], [1], 3)


# ---------------------------------------------------------------- filters
def test_diagonal_closed_form():
    f = csp_filters(np.diag([2.0, 1.0]) / 3, np.diag([1.0, 2.0]) / 3, n_pairs=1)
    np.testing.assert_allclose(f.eigenvalues, [2 / 3, 1 / 3], atol=1e-12)
    W = f.W / np.linalg.norm(f.W, axis=0)
    np.testing.assert_allclose(W, np.eye(2), atol=1e-12)


def test_equal_classes_give_half(rng):
    A = random_spd(rng, 6)
    f = csp_filters(A, A, n_pairs=3)
    np.testing.assert_allclose(f.eigenvalues, 0.5, atol=1e-12)


def test_generalized_residual_and_scipy_oracle(rng):
    Sn, Sp = random_spd(rng, 8), random_spd(rng, 8)
    f = csp_filters(Sn, Sp, n_pairs=3)
    Ssum = Sn + Sp
    for lam, w in zip(f.eigenvalues, f.W.T):
        assert np.linalg.norm(Sn @ w - lam * Ssum @ w) < 1e-8
    ref = eigh(Sn, Ssum, eigvals_only=True)[::-1]
    np.testing.assert_allclose(f.eigenvalues, np.r_[ref[:3], ref[-3:]], atol=1e-12)
    # Sum-orthonormal columns
    np.testing.assert_allclose(f.W.T @ Ssum @ f.W, np.eye(6), atol=1e-10)


def test_column_order_and_range(rng):
    f = csp_filters(random_spd(rng, 8), random_spd(rng, 8), n_pairs=2)
    assert np.all(np.diff(f.eigenvalues) <= 0)
    assert np.all((f.eigenvalues > 0) & (f.eigenvalues < 1))


def test_sign_convention(rng):
    f = csp_filters(random_spd(rng, 6), random_spd(rng, 6), n_pairs=3)
    idx = np.argmax(np.abs(f.W), axis=0)
    assert np.all(f.W[idx, np.arange(6)] > 0)


def test_eigenvalue_pairing(rng):
    Sn, Sp = random_spd(rng, 5), random_spd(rng, 5)
    fn = csp_filters(Sn, Sp, n_pairs=2)
    fp = csp_filters(Sp, Sn, n_pairs=2)
    np.testing.assert_allclose(fn.eigenvalues + fp.eigenvalues[::-1], 1.0, atol=1e-10)


def test_equivariance_under_mixing(rng):
    C = 6
    Sn, Sp = random_spd(rng, C), random_spd(rng, C)
    A = rng.standard_normal((C, C))
    f = csp_filters(Sn, Sp, 2)
    g = csp_filters(A @ Sn @ A.T, A @ Sp @ A.T, 2)
    np.testing.assert_allclose(f.eigenvalues, g.eigenvalues, atol=1e-8)
    X = rng.standard_normal((4, C, 100))
    np.testing.assert_allclose(log_variance_features(f, X), log_variance_features(g, A @ X), atol=1e-8)


def test_errors():
    with pytest.raises(InvalidInput):
        csp_filters(np.eye(4), np.eye(4), n_pairs=3)
    with pytest.raises(InvalidInput):
        csp_filters(np.eye(4), np.eye(3), n_pairs=1)
    with pytest.raises(DomainError):
        csp_filters(np.diag([1.0, 0.0]), np.diag([-1.0, 1.0]), n_pairs=1)


def test_filter_dict_round_trip(rng):
    f = csp_filters(random_spd(rng, 4), random_spd(rng, 4), 1)
    g = SpatialFilter.from_dict(f.to_dict())
    np.testing.assert_array_equal(f.W, g.W)
    assert g.n_pairs == 1


# ---------------------------------------------------------------- features
def test_identity_filter_unit_rows_give_zero(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((40, 4)))
    f = SpatialFilter(np.eye(4), np.full(4, 0.5), 2)
    np.testing.assert_allclose(log_variance_features(f, Q.T), 0.0, atol=1e-14)


def test_scaling_shifts_features(rng):
    f = csp_filters(random_spd(rng, 4), random_spd(rng, 4), 2)
    X = rng.standard_normal((4, 50))
    c = 3.7
    np.testing.assert_allclose(log_variance_features(f, c * X) - log_variance_features(f, X), 2 * np.log(c), atol=1e-12)


def test_feature_oracle(rng):
    f = csp_filters(random_spd(rng, 5), random_spd(rng, 5), 2)
    X = rng.standard_normal((5, 80))
    expected = np.log(np.diag(f.W.T @ X @ X.T @ f.W))
    assert np.abs(log_variance_features(f, X) - expected).max() < 1e-12
    np.testing.assert_allclose(features_from_scatter(f, X @ X.T), expected, atol=1e-12)


def test_zero_projection_is_degenerate():
    f = SpatialFilter(np.eye(3)[:, :2], np.array([0.6, 0.4]), 1)
    X = np.zeros((3, 20))
    X[2] = 1.0
    with pytest.raises(DegenerateInput):
        log_variance_features(f, X)


def test_channel_mismatch(rng):
    f = SpatialFilter(np.eye(3)[:, :2], np.array([0.6, 0.4]), 1)
    with pytest.raises(InvalidInput):
        log_variance_features(f, rng.standard_normal((4, 20)))


# ---------------------------------------------------------------- one-vs-rest
def test_ovr_two_classes():
    tasks = ovr_tasks([1, 2, 2, 1])
    assert len(tasks) == 2
    np.testing.assert_array_equal(tasks[0][1], -tasks[1][1])


def test_ovr_four_classes_partition():
    y = np.array([1, 2, 3, 4, 4, 3, 2, 1, 1])
    tasks = ovr_tasks(y)
    assert [c for c, _ in tasks] == [1, 2, 3, 4]
    for c, yb in tasks:
        assert np.sum(yb == 1) + np.sum(yb == -1) == len(y)
        np.testing.assert_array_equal(yb == 1, y == c)


def test_ovr_single_class():
    with pytest.raises(InvalidInput):
        ovr_tasks([1, 1, 1])


def test_binary_tasks():
    assert len(binary_tasks([3, 5, 5])) == 1
    assert binary_tasks([3, 5, 5])[0][0] == 5
    assert len(binary_tasks([1, 2, 3])) == 3


def test_fit_csp_matches_class_means(rng):
    covs = np.stack([random_spd(rng, 4) for _ in range(10)])
    yb = np.array([1, -1] * 5)
    f = fit_csp(covs, yb, 1)
    g = csp_filters(covs[yb == -1].mean(0), covs[yb == 1].mean(0), 1)
    np.testing.assert_allclose(f.W, g.W, rtol=1e-12)
