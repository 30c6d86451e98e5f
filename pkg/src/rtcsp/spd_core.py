r"""Linear algebra on the manifold of symmetric positive definite matrices.

All maps use the affine-invariant Riemannian metric (AIRM):

.. math::

    \mathrm{Log}_A(X) = A^{1/2} \log(A^{-1/2} X A^{-1/2}) A^{1/2}

    \mathrm{Exp}_A(S) = A^{1/2} \exp(A^{-1/2} S A^{-1/2}) A^{1/2}

    \delta(X_1, X_2) = \sqrt{\textstyle\sum_k \log^2 \lambda_k(X_1^{-1} X_2)}

Functions accept plain ``ndarray`` inputs. Internal helpers prefixed with an
underscore operate on stacks of matrices of shape ``(..., C, C)`` and skip
validation; the public functions validate once and then call them.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import DomainError, InvalidInput, NumericalFailure

SYM_RTOL = 1e-10
EIG_FLOOR = 1e-12

_SCALAR_FNS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "log": np.log,
    "exp": np.exp,
    "sqrt": np.sqrt,
    "inv_sqrt": lambda w: 1.0 / np.sqrt(w),
}


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------
def _as_square(S, name="matrix"):
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] == 0:
        raise InvalidInput(f"{name} must be a non-empty square matrix, got shape {S.shape}")
    if not np.all(np.isfinite(S)):
        raise InvalidInput(f"{name} contains non-finite entries")
    return S


def is_symmetric(S, rtol=SYM_RTOL):
    S = np.asarray(S, dtype=float)
    scale = np.max(np.abs(S)) if S.size else 0.0
    return bool(np.max(np.abs(S - S.swapaxes(-1, -2)), initial=0.0) <= rtol * scale)


def check_symmetric(S, name="matrix"):
    """Return ``S`` as a float array, raising InvalidInput if it is not symmetric."""
    S = _as_square(S, name)
    if not is_symmetric(S):
        raise InvalidInput(f"{name} is not symmetric")
    return S


def check_spd(S, name="matrix"):
    """Return ``S`` as a float array after checking symmetry and positivity.

    Raises
    ------
    InvalidInput
        If ``S`` is not square or not symmetric.
    DomainError
        If the smallest eigenvalue is not strictly positive.
    """
    S = check_symmetric(S, name)
    w = np.linalg.eigvalsh(S)
    if w[0] <= 0:
        raise DomainError(f"{name} is not positive definite (min eigenvalue {w[0]:.3e})")
    return S


def _check_same_dim(*mats):
    dims = {m.shape[-1] for m in mats}
    if len(dims) != 1:
        raise InvalidInput(f"dimension mismatch: {sorted(dims)}")


# --------------------------------------------------------------------------
# batched kernels (no validation)
# --------------------------------------------------------------------------
def _sym(S):
    return 0.5 * (S + np.swapaxes(S, -1, -2))


def _fn_eigh(S, fn, check_domain=True):
    w, V = np.linalg.eigh(S)
    if check_domain:
        wmax = np.max(np.abs(w), axis=-1, keepdims=True)
        if np.any(w <= EIG_FLOOR * wmax) or np.any(w <= 0):
            raise DomainError("matrix function requires a positive definite argument")
    return (V * fn(w)[..., None, :]) @ np.swapaxes(V, -1, -2)


def _logm(S):
    return _fn_eigh(S, np.log)


def _expm(S):
    return _fn_eigh(S, np.exp, check_domain=False)


def _sqrt_and_invsqrt(A):
    w, V = np.linalg.eigh(A)
    if np.any(w <= EIG_FLOOR * np.max(np.abs(w), axis=-1, keepdims=True)) or np.any(w <= 0):
        raise DomainError("base point is not positive definite")
    Vt = np.swapaxes(V, -1, -2)
    sq = np.sqrt(w)
    return (V * sq[..., None, :]) @ Vt, (V * (1.0 / sq)[..., None, :]) @ Vt


def _log_map(A, X):
    s, isq = _sqrt_and_invsqrt(A)
    return _sym(s @ _logm(_sym(isq @ X @ isq)) @ s)


def _exp_map(A, S):
    s, isq = _sqrt_and_invsqrt(A)
    return _sym(s @ _expm(_sym(isq @ S @ isq)) @ s)


# --------------------------------------------------------------------------
# public API
# --------------------------------------------------------------------------
def sym_eig(S):
    """Eigendecomposition of a symmetric matrix with descending eigenvalues.

    Parameters
    ----------
    S : ndarray, shape (C, C)
        Symmetric matrix.

    Returns
    -------
    eigenvalues : ndarray, shape (C,)
        Sorted from largest to smallest.
    eigenvectors : ndarray, shape (C, C)
        Orthonormal columns matching ``eigenvalues``.
    """
    S = check_symmetric(S)
    try:
        w, V = np.linalg.eigh(_sym(S))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition did not converge: {exc}") from exc
    return w[::-1].copy(), V[:, ::-1].copy()


def matrix_fn(S, f):
    """Apply a scalar function to the spectrum of a symmetric matrix.

    ``f`` is one of ``"log"``, ``"exp"``, ``"sqrt"``, ``"inv_sqrt"``. All
    but ``"exp"`` require ``S`` to be positive definite; eigenvalues below
    ``1e-12 * max|eigenvalue|`` are rejected with DomainError rather than
    floored.
    """
    if f not in _SCALAR_FNS:
        raise InvalidInput(f"unknown matrix function {f!r}; choose from {sorted(_SCALAR_FNS)}")
    S = check_symmetric(S)
    return _sym(_fn_eigh(_sym(S), _SCALAR_FNS[f], check_domain=(f != "exp")))


@dataclass(frozen=True)
class TangentVector:
    """Symmetric matrix living in the tangent space at ``base``."""

    base: np.ndarray
    sym: np.ndarray

    @property
    def vec(self):
        return vec_upper(self.sym)

    @property
    def dim(self):
        return self.sym.shape[0]


def _tangent_matrix(S, dim):
    mat = S.sym if isinstance(S, TangentVector) else np.asarray(S, dtype=float)
    if mat.shape != (dim, dim):
        raise InvalidInput(f"tangent vector shape {mat.shape} does not match base dimension {dim}")
    return mat


def log_map(A, X):
    """Riemannian logarithm of ``X`` at base point ``A``.

    Returns the tangent vector ``A^{1/2} log(A^{-1/2} X A^{-1/2}) A^{1/2}``.
    ``log_map(A, A)`` is the zero matrix and ``exp_map(A, log_map(A, X))``
    recovers ``X``.
    """
    A = check_spd(A, "base point")
    X = check_spd(X, "point")
    _check_same_dim(A, X)
    return TangentVector(base=A, sym=_log_map(A, X))


def exp_map(A, S):
    """Riemannian exponential at ``A`` of a tangent vector or symmetric matrix."""
    A = check_spd(A, "base point")
    mat = check_symmetric(_tangent_matrix(S, A.shape[0]), "tangent vector")
    return _exp_map(A, mat)


def airm_inner(A, S1, S2):
    """AIRM inner product ``tr(A^{-1} S1 A^{-1} S2)`` on the tangent space at ``A``."""
    A = check_spd(A, "base point")
    m1 = _tangent_matrix(S1, A.shape[0])
    m2 = _tangent_matrix(S2, A.shape[0])
    c, low = scipy.linalg.cho_factor(A)
    return float(np.trace(scipy.linalg.cho_solve((c, low), m1) @ scipy.linalg.cho_solve((c, low), m2)))


def airm_distance_squared(X1, X2):
    """Sum of squared log generalized eigenvalues of the pencil ``(X2, X1)``."""
    X1 = check_spd(X1)
    X2 = check_spd(X2)
    _check_same_dim(X1, X2)
    w = scipy.linalg.eigh(X2, X1, eigvals_only=True)
    return float(np.sum(np.log(w) ** 2))


def airm_distance(X1, X2):
    """Geodesic distance under the affine-invariant metric."""
    return float(np.sqrt(airm_distance_squared(X1, X2)))


def riemannian_mean(covs, tol=1e-8, max_iter=100, return_info=False):
    """Karcher mean of a set of SPD matrices.

    Runs the fixed-point iteration
    ``mu <- Exp_mu(mean_i Log_mu(X_i))`` from the arithmetic mean and stops
    once the Frobenius norm of the averaged tangent vector drops to ``tol``.

    Parameters
    ----------
    covs : sequence of ndarray or ndarray, shape (n, C, C)
        Non-empty set of SPD matrices of equal size.
    tol : float
        Stopping threshold on ``||mean_i Log_mu(X_i)||_F``.
    max_iter : int
        Iteration cap. Reaching it with a gradient above ``100 * tol``
        raises NumericalFailure; between ``tol`` and ``100 * tol`` a warning
        is emitted and the iterate returned.
    return_info : bool
        Also return ``{"n_iter": ..., "grad_norm": ...}``.

    Returns
    -------
    mu : ndarray, shape (C, C)
    """
    covs = check_spd_stack(covs)
    mu = _sym(covs.mean(axis=0))
    grad_norm = np.inf
    for n_iter in range(max_iter + 1):
        s, isq = _sqrt_and_invsqrt(mu)
        white_mean = _logm(_sym(isq @ covs @ isq)).mean(axis=0)
        grad_norm = float(np.linalg.norm(s @ white_mean @ s))
        if grad_norm <= tol:
            break
        if n_iter == max_iter:
            if grad_norm > 100 * tol:
                raise NumericalFailure(
                    f"Karcher mean did not converge in {max_iter} iterations "
                    f"(gradient norm {grad_norm:.3e}, tol {tol:.1e}, n={len(covs)})"
                )
            warnings.warn(
                f"Karcher mean stopped at max_iter with gradient norm {grad_norm:.3e}",
                RuntimeWarning,
                stacklevel=2,
            )
            break
        mu = _sym(s @ _expm(_sym(white_mean)) @ s)
    if return_info:
        return mu, {"n_iter": n_iter, "grad_norm": grad_norm}
    return mu


def geodesic_midpoint(A, B):
    """Point halfway along the AIRM geodesic from ``A`` to ``B``."""
    A = check_spd(A)
    B = check_spd(B)
    s, isq = _sqrt_and_invsqrt(A)
    return _sym(s @ _fn_eigh(_sym(isq @ B @ isq), np.sqrt) @ s)


def vec_upper(S):
    """Flatten the upper triangle (``i <= j``, row-major) of a symmetric matrix."""
    S = check_symmetric(S)
    return S[np.triu_indices(S.shape[0])].copy()


def _tri_dim(length):
    C = int(round((np.sqrt(8 * length + 1) - 1) / 2))
    if length <= 0 or C * (C + 1) // 2 != length:
        raise InvalidInput(f"vector length {length} is not a triangular number")
    return C


def mat_from_vec(v):
    """Inverse of :func:`vec_upper`."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise InvalidInput("expected a 1-D vector")
    C = _tri_dim(v.size)
    S = np.zeros((C, C))
    iu = np.triu_indices(C)
    S[iu] = v
    S[(iu[1], iu[0])] = v
    return S


def _as_stack(covs: Sequence | np.ndarray) -> np.ndarray:
    try:
        arr = np.asarray(covs, dtype=float)
    except ValueError:
        raise InvalidInput("matrices in a set must share one dimension") from None
    if arr.ndim != 3 or arr.shape[0] == 0 or arr.shape[1] != arr.shape[2]:
        raise InvalidInput("expected a non-empty set of equally sized square matrices")
    if not np.all(np.isfinite(arr)):
        raise InvalidInput("matrices contain non-finite entries")
    return arr


def check_spd_stack(covs, name="matrices"):
    """Validate a stack ``(n, C, C)`` of SPD matrices in one pass."""
    arr = _as_stack(covs)
    scale = np.max(np.abs(arr), axis=(1, 2))
    asym = np.max(np.abs(arr - np.swapaxes(arr, 1, 2)), axis=(1, 2))
    bad = np.flatnonzero(asym > SYM_RTOL * scale)
    if bad.size:
        raise InvalidInput(f"{name}: entry {bad[0]} is not symmetric")
    wmin = np.linalg.eigvalsh(arr)[:, 0]
    bad = np.flatnonzero(wmin <= 0)
    if bad.size:
        raise DomainError(f"{name}: entry {bad[0]} is not positive definite (min eigenvalue {wmin[bad[0]]:.3e})")
    return arr


def log_map_batch(A, covs):
    """Tangent matrices ``Log_A(X_i)`` for a stack of SPD matrices."""
    A = check_spd(A, "base point")
    covs = check_spd_stack(covs)
    _check_same_dim(A, covs)
    return _log_map(A, covs)


def exp_map_batch(A, mats):
    """``Exp_A(S_i)`` for a stack of symmetric matrices."""
    A = check_spd(A, "base point")
    mats = _as_stack(mats)
    _check_same_dim(A, mats)
    return _exp_map(A, mats)


def vec_upper_batch(mats):
    mats = _as_stack(mats)
    iu = np.triu_indices(mats.shape[-1])
    return mats[:, iu[0], iu[1]]


def mat_from_vec_batch(vecs):
    vecs = np.asarray(vecs, dtype=float)
    C = _tri_dim(vecs.shape[-1])
    out = np.zeros(vecs.shape[:-1] + (C, C))
    iu = np.triu_indices(C)
    out[..., iu[0], iu[1]] = vecs
    out[..., iu[1], iu[0]] = vecs
    return out
