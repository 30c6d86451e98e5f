"""Common spatial patterns: filters, log-variance features, one-vs-rest tasks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DegenerateInput, DomainError, InvalidInput
from .signal import as_array
from .spd_core import _sym, check_spd

DEFAULT_N_PAIRS = 3


@dataclass(frozen=True)
class SpatialFilter:
    """CSP projection.

    Attributes
    ----------
    W : ndarray, shape (C, 2 * n_pairs)
        Filters as columns: the ``n_pairs`` largest generalized eigenvalues
        first, the ``n_pairs`` smallest last, all in descending order.
    eigenvalues : ndarray, shape (2 * n_pairs,)
    n_pairs : int
    """

    W: np.ndarray
    eigenvalues: np.ndarray
    n_pairs: int

    @property
    def n_channels(self):
        return self.W.shape[0]

    def to_dict(self):
        return {"W": self.W.tolist(), "eigenvalues": self.eigenvalues.tolist(), "n_pairs": self.n_pairs}

    @classmethod
    def from_dict(cls, d):
        return cls(np.asarray(d["W"], dtype=float), np.asarray(d["eigenvalues"], dtype=float), int(d["n_pairs"]))


def fix_column_signs(V):
    """Flip columns so that each one's largest-magnitude entry is positive."""
    V = np.array(V, dtype=float)
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def class_mean_covariance(covs, labels, class_id):
    """Arithmetic mean of the covariances labelled ``class_id``."""
    covs = np.asarray(covs, dtype=float)
    mask = np.asarray(labels) == class_id
    if not mask.any():
        raise InvalidInput(f"no trials of class {class_id!r}")
    return covs[mask].sum(axis=0) / mask.sum()


def generalized_eigh(A, B):
    """Solve ``A w = lam B w`` for symmetric ``A`` and SPD ``B`` by Cholesky reduction.

    Returns eigenvalues in descending order and ``B``-orthonormal eigenvectors.
    """
    try:
        L = np.linalg.cholesky(B)
    except np.linalg.LinAlgError:
        raise DomainError("sum of class covariances is not positive definite; shrink the covariances") from None
    Li_A = scipy.linalg.solve_triangular(L, A, lower=True)
    M = scipy.linalg.solve_triangular(L, Li_A.T, lower=True)
    w, V = np.linalg.eigh(_sym(M))
    w, V = w[::-1], V[:, ::-1]
    W = scipy.linalg.solve_triangular(L.T, V, lower=False)
    return w, W


def csp_filters(sigma_neg, sigma_pos, n_pairs=DEFAULT_N_PAIRS) -> SpatialFilter:
    """CSP filters from two class-mean covariances.

    Solves ``sigma_neg w = lam (sigma_neg + sigma_pos) w`` and keeps the
    first and last ``n_pairs`` eigenvectors. Filters with a large eigenvalue
    maximise the variance of the negative class.
    """
    sigma_neg = np.asarray(sigma_neg, dtype=float)
    sigma_pos = np.asarray(sigma_pos, dtype=float)
    if sigma_neg.shape != sigma_pos.shape or sigma_neg.ndim != 2:
        raise InvalidInput(f"class covariances must share a square shape, got {sigma_neg.shape} and {sigma_pos.shape}")
    C = sigma_neg.shape[0]
    if n_pairs < 1 or 2 * n_pairs > C:
        raise InvalidInput(f"n_pairs={n_pairs} invalid for {C} channels (need 1 <= 2 * n_pairs <= C)")
    w, W = generalized_eigh(_sym(sigma_neg), _sym(sigma_neg + sigma_pos))
    keep = np.r_[0:n_pairs, C - n_pairs:C]
    return SpatialFilter(W=fix_column_signs(W[:, keep]), eigenvalues=w[keep].copy(), n_pairs=n_pairs)


def log_variance_features(filt: SpatialFilter, trials):
    """``log(diag(W' X X' W))`` for one trial ``(C, T)`` or a batch ``(n, C, T)``."""
    X = as_array(trials)
    if X.shape[-2] != filt.n_channels:
        raise InvalidInput(f"trial has {X.shape[-2]} channels, filter expects {filt.n_channels}")
    return features_from_scatter(filt, X @ np.swapaxes(X, -1, -2))


def features_from_scatter(filt: SpatialFilter, scatter):
    """Log-variance features from precomputed ``X X'`` (or covariance) matrices."""
    W = filt.W
    var = np.einsum("ci,...cd,di->...i", W, scatter, W)
    if np.any(var <= 0):
        raise DegenerateInput("non-positive projected variance; trial is numerically zero along a filter")
    return np.log(var)


def ovr_tasks(labels):
    """One-vs-rest binarisations, one per class in ascending label order."""
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size < 2:
        raise InvalidInput("one-vs-rest needs at least two distinct classes")
    return [(c, np.where(labels == c, 1, -1)) for c in classes]


def binary_tasks(labels):
    """Binary CSP tasks for a label vector.

    Two classes give a single task (second class as +1); more give the
    one-vs-rest set.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    if classes.size == 2:
        return [(classes[1], np.where(labels == classes[1], 1, -1))]
    return ovr_tasks(labels)


def fit_csp(covs, ybin, n_pairs=DEFAULT_N_PAIRS):
    """CSP filter for ``±1`` labels, checking SPD of the class means."""
    sigma_neg = class_mean_covariance(covs, ybin, -1)
    sigma_pos = class_mean_covariance(covs, ybin, 1)
    check_spd(sigma_neg + sigma_pos, "sum of class covariances")
    return csp_filters(sigma_neg, sigma_pos, n_pairs)
