"""Two-class linear discriminant analysis and majority voting."""

from __future__ import annotations

import warnings
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import InvalidInput

DEFAULT_RIDGE = 1e-6


@dataclass(frozen=True)
class LdaModel:
    """Fitted binary LDA for labels ``-1`` / ``+1``.

    The decision value is ``weights @ x + bias``; it is positive on the
    ``+1`` side and already includes the log prior ratio.
    """

    weights: np.ndarray
    bias: float
    class_means: np.ndarray  # row 0: class -1, row 1: class +1
    shared_cov: np.ndarray
    priors: np.ndarray  # (P(-1), P(+1))

    @property
    def n_features(self):
        return self.weights.shape[0]

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n_features:
            raise InvalidInput(f"feature length {X.shape[-1]} does not match model ({self.n_features})")
        return X @ self.weights + self.bias

    def to_dict(self):
        return {
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "class_means": self.class_means.tolist(),
            "shared_cov": self.shared_cov.tolist(),
            "priors": self.priors.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            weights=np.asarray(d["weights"], dtype=float),
            bias=float(d["bias"]),
            class_means=np.asarray(d["class_means"], dtype=float),
            shared_cov=np.asarray(d["shared_cov"], dtype=float),
            priors=np.asarray(d["priors"], dtype=float),
        )


def lda_fit(features, labels, ridge=DEFAULT_RIDGE, priors="empirical") -> LdaModel:
    """Fit LDA with a pooled within-class covariance.

    Parameters
    ----------
    features : ndarray, shape (n, F)
    labels : array of ``-1`` / ``+1``
    ridge : float
        Relative ridge; ``ridge * tr(cov) / F`` is added to the diagonal.
    priors : {"empirical", "equal"}
    """
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise InvalidInput("features must be (n, F) with one label per row")
    if not np.all(np.isin(y, (-1, 1))):
        raise InvalidInput("labels must be -1 or +1")
    neg, pos = X[y == -1], X[y == 1]
    if len(neg) == 0 or len(pos) == 0:
        raise InvalidInput("LDA needs both classes present")
    n, F = X.shape
    if n < F:
        warnings.warn(f"fitting LDA with fewer samples ({n}) than features ({F})", stacklevel=2)

    mu_neg, mu_pos = neg.mean(axis=0), pos.mean(axis=0)
    dn, dp = neg - mu_neg, pos - mu_pos
    dof = n - 2 if n > 2 else n
    cov = (dn.T @ dn + dp.T @ dp) / dof
    cov = 0.5 * (cov + cov.T)
    eps = ridge * np.trace(cov) / F
    if eps <= 0:
        eps = ridge
    cov = cov + eps * np.eye(F)

    if priors == "empirical":
        pri = np.array([len(neg), len(pos)], dtype=float) / n
    elif priors == "equal":
        pri = np.array([0.5, 0.5])
    else:
        raise InvalidInput(f"unknown priors option {priors!r}")

    w = np.linalg.solve(cov, mu_pos - mu_neg)
    bias = -w @ (0.5 * (mu_pos + mu_neg)) + np.log(pri[1] / pri[0])
    return LdaModel(w, float(bias), np.vstack([mu_neg, mu_pos]), cov, pri)


def lda_posterior(model: LdaModel, feature):
    """Probability of class ``+1``; works on a single vector or a batch."""
    return expit(model.decision_function(feature))


def lda_predict(model: LdaModel, features):
    return np.where(model.decision_function(features) > 0, 1, -1)


def majority_vote(votes, tie_breaker=None):
    """Most frequent label in ``votes``; on a tie, ``tie_breaker``."""
    votes = list(votes)
    if not votes:
        raise InvalidInput("no votes to count")
    counts = Counter(votes).most_common()
    top = counts[0][1]
    leaders = [label for label, c in counts if c == top]
    if len(leaders) == 1:
        return leaders[0]
    return tie_breaker if tie_breaker is not None else sorted(leaders)[0]
