r"""Per-class alignment of source covariances onto a target subject.

For one class, both subjects' covariances are mapped to the tangent space at
their own Riemannian mean and flattened. The two leading principal axes
``P`` (2 x d) and the Cholesky factor ``L`` of the 2 x 2 second moment in
that plane are estimated per subject, and each source vector is recoloured

.. math::

    x_{al} = P_T^\top L_T L_S^{-1} P_S x

before being mapped back to the manifold at the target mean.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, InvalidInput, MissingClassError
from .spd_core import (
    _exp_map,
    _log_map,
    _sym,
    check_spd_stack,
    mat_from_vec_batch,
    riemannian_mean,
    vec_upper_batch,
)

N_COMPONENTS = 2
MIN_CLASS_TRIALS = 3
RANK_RTOL = 1e-12


@dataclass(frozen=True)
class AlignmentMap:
    """Artifacts of one class alignment (source -> target)."""

    class_id: object
    M_S: np.ndarray
    M_T: np.ndarray
    P_S: np.ndarray
    P_T: np.ndarray
    L_S: np.ndarray
    L_T: np.ndarray

    @property
    def transform(self):
        """The d x d linear map ``P_T' L_T L_S^{-1} P_S`` on flattened vectors."""
        return self.P_T.T @ self.L_T @ np.linalg.solve(self.L_S, self.P_S)

    def apply(self, source_vectors):
        """Recolour flattened source tangent vectors (rows)."""
        core = self.L_T @ np.linalg.solve(self.L_S, self.P_S @ np.asarray(source_vectors).T)
        return (self.P_T.T @ core).T

    def to_dict(self):
        cid = self.class_id.item() if hasattr(self.class_id, "item") else self.class_id
        return {
            "class_id": cid,
            **{k: getattr(self, k).tolist() for k in ("M_S", "M_T", "P_S", "P_T", "L_S", "L_T")},
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, d):
        return cls(d["class_id"], *(np.asarray(d[k], dtype=float) for k in ("M_S", "M_T", "P_S", "P_T", "L_S", "L_T")))


def tangent_vectors_at_mean(covs, tol=1e-8, max_iter=100):
    """Riemannian mean of ``covs`` and the flattened log-maps at that mean.

    Returns
    -------
    mean : ndarray, shape (C, C)
    vectors : ndarray, shape (N, C(C+1)/2)
    """
    covs = check_spd_stack(covs, "covariances")
    if len(covs) < 2:
        raise InvalidInput("need at least two covariances")
    mean = riemannian_mean(covs, tol=tol, max_iter=max_iter)
    return mean, vec_upper_batch(_log_map(mean, covs))


def top_principal_axes(vectors, n_components=N_COMPONENTS):
    """Leading right singular vectors of the uncentred data matrix, as rows.

    Sign convention: the largest-magnitude entry of each axis is positive.
    """
    V = np.asarray(vectors, dtype=float)
    if V.ndim != 2 or V.shape[0] < 2:
        raise InvalidInput("need an (N, d) matrix with N >= 2")
    if n_components > min(V.shape):
        raise DegenerateInput(f"cannot extract {n_components} components from data of shape {V.shape}")
    _, s, Vt = np.linalg.svd(V, full_matrices=False)
    if s[0] == 0 or s[n_components - 1] < RANK_RTOL * s[0]:
        raise DegenerateInput(f"tangent vectors have rank < {n_components} (singular values {s[:n_components]})")
    P = Vt[:n_components].copy()
    idx = np.argmax(np.abs(P), axis=1)
    P *= np.sign(P[np.arange(n_components), idx])[:, None]
    return P


def top2_pca(vectors):
    """Two leading principal axes (2 x d); see :func:`top_principal_axes`."""
    return top_principal_axes(vectors, 2)


def pc_space_cholesky(P, vectors, normalize=True):
    """Lower Cholesky factor of the second moment of ``vectors`` projected on ``P``.

    With ``normalize`` the second moment is divided by the number of rows,
    which keeps the recolouring independent of the subjects' trial counts.
    """
    P = np.asarray(P, dtype=float)
    Z = P @ np.asarray(vectors, dtype=float).T
    G = Z @ Z.T
    if normalize:
        G = G / Z.shape[1]
    try:
        L = np.linalg.cholesky(_sym(G))
    except np.linalg.LinAlgError:
        raise DegenerateInput("principal-component second moment is not positive definite") from None
    if np.any(np.diag(L) <= 0):
        raise DegenerateInput("principal-component second moment is singular")
    return L


def align_tangent_vectors(source_covs, target_covs, class_id=None, normalize=True, n_components=N_COMPONENTS):
    """Core alignment returning the recoloured flattened source vectors too.

    Returns
    -------
    aligned_vectors : ndarray, shape (N, d)
    target_vectors : ndarray, shape (M, d)
    amap : AlignmentMap
    """
    source_covs = check_spd_stack(source_covs, "source covariances")
    target_covs = check_spd_stack(target_covs, "target covariances")
    if source_covs.shape[1] != target_covs.shape[1]:
        raise InvalidInput(f"channel mismatch: source {source_covs.shape[1]}, target {target_covs.shape[1]}")
    where = "" if class_id is None else f" (class {class_id!r})"
    for side, covs in (("source", source_covs), ("target", target_covs)):
        if len(covs) < MIN_CLASS_TRIALS:
            raise DegenerateInput(f"{side} has {len(covs)} trials{where}; alignment needs >= {MIN_CLASS_TRIALS}")
    try:
        M_S, xs = tangent_vectors_at_mean(source_covs)
        M_T, xt = tangent_vectors_at_mean(target_covs)
        P_S = top_principal_axes(xs, n_components)
        P_T = top_principal_axes(xt, n_components)
        L_S = pc_space_cholesky(P_S, xs, normalize)
        L_T = pc_space_cholesky(P_T, xt, normalize)
    except DegenerateInput as exc:
        raise DegenerateInput(f"{exc}{where}") from exc
    amap = AlignmentMap(class_id, M_S, M_T, P_S, P_T, L_S, L_T)
    return amap.apply(xs), xt, amap


def align_class(source_covs, target_covs, class_id=None, normalize=True, n_components=N_COMPONENTS):
    """Align one class of source covariances to the matching target class.

    Returns
    -------
    aligned : ndarray, shape (N, C, C)
        Source covariances after recolouring, in input order.
    amap : AlignmentMap
    """
    x_al, _, amap = align_tangent_vectors(source_covs, target_covs, class_id, normalize, n_components)
    return _exp_map(amap.M_T, mat_from_vec_batch(x_al)), amap


def align_subject(source_covs, source_labels, target_covs, target_labels, normalize=True, n_components=N_COMPONENTS):
    """Align every class of a source subject to the target subject.

    Each class is aligned with only its own trials on both sides; output
    order and labels follow the source input.

    Returns
    -------
    aligned : ndarray, shape (N, C, C)
    maps : dict
        ``class_id -> AlignmentMap``.
    """
    source_covs = np.asarray(source_covs, dtype=float)
    target_covs = np.asarray(target_covs, dtype=float)
    ys, yt = np.asarray(source_labels), np.asarray(target_labels)
    if len(ys) != len(source_covs) or len(yt) != len(target_covs):
        raise InvalidInput("one label per covariance required")
    missing = sorted(set(ys.tolist()) - set(yt.tolist()))
    if missing:
        raise MissingClassError(f"classes {missing} present in source but absent from target")
    aligned = np.empty_like(source_covs)
    maps = {}
    for c in np.unique(ys):
        ms, mt = ys == c, yt == c
        aligned[ms], maps[c] = align_class(source_covs[ms], target_covs[mt], c, normalize, n_components)
    return aligned, maps
