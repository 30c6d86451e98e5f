import json

import numpy as np
import pytest

from conftest import random_spd
from rtcsp.alignment import (
    AlignmentMap,
    align_class,
    align_subject,
    align_tangent_vectors,
    pc_space_cholesky,
    tangent_vectors_at_mean,
    top2_pca,
    top_principal_axes,
)
from rtcsp.errors import DegenerateInput, InvalidInput, MissingClassError
from rtcsp.signal import covariances
from rtcsp.spd_core import log_map, mat_from_vec_batch, vec_upper


def class_set(rng, n, C=8, T=200, mixing=None):
    A = mixing if mixing is not None else rng.standard_normal((C, C)) + 2 * np.eye(C)
    gains = np.exp(0.5 * rng.standard_normal((n, C, 1)))
    return covariances(A @ (gains * rng.standard_normal((n, C, T))))


def principal_angles(P, Q):
    s = np.linalg.svd(P @ Q.T, compute_uv=False)
    return np.arccos(np.clip(s, -1, 1))


# ---------------------------------------------------------------- tangent vectors
def test_identical_covs_give_zero_rows(rng):
    A = random_spd(rng, 3)
    _, V = tangent_vectors_at_mean([A, A])
    assert np.abs(V).max() < 1e-12


def test_commuting_pair_rows_are_antipodal():
    M, V = tangent_vectors_at_mean([np.diag([1.0, 4.0]), np.diag([4.0, 1.0])])
    np.testing.assert_allclose(M, 2 * np.eye(2), atol=1e-10)
    np.testing.assert_allclose(V[0], -V[1], atol=1e-7)


def test_row_sum_vanishes(rng):
    _, V = tangent_vectors_at_mean(class_set(rng, 30))
    assert np.linalg.norm(V.sum(axis=0)) < 1e-6


def test_tangent_needs_two(rng):
    with pytest.raises(InvalidInput):
        tangent_vectors_at_mean([random_spd(rng, 3)])


# ---------------------------------------------------------------- PCA
def test_pca_recovers_coordinate_plane(rng):
    V = np.zeros((20, 6))
    V[:, 1] = rng.standard_normal(20) * 3
    V[:, 4] = rng.standard_normal(20)
    P = top2_pca(V)
    plane = np.zeros((2, 6))
    plane[0, 1] = plane[1, 4] = 1
    assert np.linalg.norm(P.T @ P - plane.T @ plane) < 1e-10


def test_pca_rank_one_degenerate(rng):
    v = rng.standard_normal(5)
    with pytest.raises(DegenerateInput):
        top2_pca(np.vstack([v, -v]))
    with pytest.raises(DegenerateInput):
        top2_pca(np.zeros((4, 5)))


def test_pca_planted_subspace(rng):
    B, _ = np.linalg.qr(rng.standard_normal((10, 2)))
    V = (rng.standard_normal((50, 2)) * np.sqrt([10.0, 10.0])) @ B.T
    V -= V.mean(axis=0)
    P = top2_pca(V)
    assert principal_angles(P, B.T).max() < 1e-6
    # 10:1 variance ratio against isotropic noise still lands close
    noisy = V + rng.standard_normal((50, 10)) * 0.01
    assert principal_angles(top2_pca(noisy), B.T).max() < 0.05


def test_pca_orthonormal_and_signed(rng):
    P = top_principal_axes(rng.standard_normal((30, 9)))
    np.testing.assert_allclose(P @ P.T, np.eye(2), atol=1e-10)
    idx = np.argmax(np.abs(P), axis=1)
    assert np.all(P[[0, 1], idx] > 0)


# ---------------------------------------------------------------- Cholesky
def test_cholesky_identity_and_diag():
    P = np.eye(2, 5)
    Z = np.array([[1.0, 1, -1, -1], [1, -1, 1, -1]])  # second moment = I
    V = np.zeros((4, 5))
    V[:, :2] = Z.T
    np.testing.assert_allclose(pc_space_cholesky(P, V), np.eye(2), atol=1e-15)
    V[:, 0] *= 2
    np.testing.assert_allclose(pc_space_cholesky(P, V), np.diag([2.0, 1.0]), atol=1e-15)


def test_cholesky_reconstruction(rng):
    V = rng.standard_normal((25, 6))
    P = top2_pca(V)
    L = pc_space_cholesky(P, V)
    G = P @ V.T @ V @ P.T / 25
    assert np.abs(L @ L.T - G).max() < 1e-12
    assert L[0, 1] == 0 and np.all(np.diag(L) > 0)
    Lraw = pc_space_cholesky(P, V, normalize=False)
    np.testing.assert_allclose(Lraw, L * 5, rtol=1e-12)


def test_cholesky_singular(rng):
    P = np.eye(2, 4)
    V = np.zeros((3, 4))
    V[:, 0] = 1
    with pytest.raises(DegenerateInput):
        pc_space_cholesky(P, V)


# ---------------------------------------------------------------- align_class
def test_recoloring_identity(rng):
    for _ in range(5):
        N, M = rng.choice(np.arange(10, 61), 2, replace=False)
        S, T = class_set(rng, N), class_set(rng, M)
        x_al, _, amap = align_tangent_vectors(S, T)
        Z = amap.P_T @ x_al.T
        assert np.abs(Z @ Z.T / N - amap.L_T @ amap.L_T.T).max() < 1e-10


def test_self_alignment(rng):
    S = class_set(rng, 20)
    x_al, xt, amap = align_tangent_vectors(S, S)
    np.testing.assert_allclose(amap.P_T @ x_al.T, amap.P_T @ xt.T, atol=1e-8)
    Z = amap.P_T @ x_al.T
    assert np.abs(Z @ Z.T / 20 - amap.L_T @ amap.L_T.T).max() < 1e-10


def test_aligned_covs_spd_and_sane(rng):
    S, T = class_set(rng, 30), class_set(rng, 25)
    aligned, amap = align_class(S, T, class_id=1)
    assert aligned.shape == S.shape
    assert np.linalg.eigvalsh(aligned).min() > 0
    tr_t = np.trace(T, axis1=1, axis2=2).mean()
    tr_a = np.trace(aligned, axis1=1, axis2=2)
    assert np.all((tr_a < 10 * tr_t) & (tr_a > tr_t / 10))
    np.testing.assert_allclose(amap.P_S @ amap.P_S.T, np.eye(2), atol=1e-10)
    np.testing.assert_allclose(amap.P_T @ amap.P_T.T, np.eye(2), atol=1e-10)


def test_aligned_vectors_lie_in_target_plane(rng):
    S, T = class_set(rng, 15), class_set(rng, 18)
    x_al, _, amap = align_tangent_vectors(S, T)
    resid = x_al - (x_al @ amap.P_T.T) @ amap.P_T
    assert np.abs(resid).max() < 1e-12
    raw = tangent_vectors_at_mean(S)[1]
    np.testing.assert_allclose(raw @ amap.transform.T, x_al, atol=1e-12)


def test_exp_back_matches_vectors(rng):
    S, T = class_set(rng, 12), class_set(rng, 14)
    aligned, amap = align_class(S, T)
    x_al, _, _ = align_tangent_vectors(S, T)
    back = np.array([vec_upper(log_map(amap.M_T, X).sym) for X in aligned])
    np.testing.assert_allclose(back, x_al, atol=1e-9)


def test_too_few_trials(rng):
    with pytest.raises(DegenerateInput, match="class 'left'"):
        align_class(class_set(rng, 2), class_set(rng, 10), class_id="left")


def test_degenerate_context_attached(rng):
    A = random_spd(rng, 3)
    with pytest.raises(DegenerateInput, match="class 2"):
        align_class(np.stack([A] * 4), np.stack([A] * 4), class_id=2)


def test_channel_mismatch(rng):
    with pytest.raises(InvalidInput):
        align_class(class_set(rng, 5, C=4), class_set(rng, 5, C=5))


def test_deterministic(rng):
    S, T = class_set(rng, 10), class_set(rng, 12)
    a1, m1 = align_class(S, T)
    a2, m2 = align_class(S, T)
    assert np.array_equal(a1, a2)
    assert np.array_equal(m1.transform, m2.transform)


def test_map_json_round_trip(rng):
    _, amap = align_class(class_set(rng, 10), class_set(rng, 12), class_id=np.int64(2))
    d = json.loads(amap.to_json())
    assert d["class_id"] == 2
    back = AlignmentMap.from_dict(d)
    np.testing.assert_array_equal(back.L_T, amap.L_T)


# ---------------------------------------------------------------- align_subject
def labelled(rng, n_per_class, classes, C=6):
    mixing = rng.standard_normal((C, C)) + 2 * np.eye(C)
    covs = np.concatenate([class_set(rng, n_per_class, C, mixing=mixing) for _ in classes])
    y = np.repeat(classes, n_per_class)
    perm = rng.permutation(len(y))
    return covs[perm], y[perm]


def test_two_classes_partition(rng):
    Sc, Sy = labelled(rng, 12, [1, 2])
    Tc, Ty = labelled(rng, 8, [1, 2])
    aligned, maps = align_subject(Sc, Sy, Tc, Ty)
    assert sorted(maps) == [1, 2]
    for c in (1, 2):
        ref, _ = align_class(Sc[Sy == c], Tc[Ty == c], c)
        np.testing.assert_allclose(aligned[Sy == c], ref, rtol=1e-12)


def test_four_classes(rng):
    Sc, Sy = labelled(rng, 6, [1, 2, 3, 4])
    Tc, Ty = labelled(rng, 5, [1, 2, 3, 4])
    aligned, maps = align_subject(Sc, Sy, Tc, Ty)
    assert len(maps) == 4
    assert aligned.shape == Sc.shape


def test_order_equivariance(rng):
    Sc, Sy = labelled(rng, 10, [1, 2])
    Tc, Ty = labelled(rng, 10, [1, 2])
    base, _ = align_subject(Sc, Sy, Tc, Ty)
    perm = rng.permutation(len(Sy))
    out, _ = align_subject(Sc[perm], Sy[perm], Tc, Ty)
    np.testing.assert_allclose(out, base[perm], rtol=1e-7, atol=1e-12)


def test_missing_class(rng):
    Sc, Sy = labelled(rng, 5, [1, 2, 3])
    Tc, Ty = labelled(rng, 5, [1, 2])
    with pytest.raises(MissingClassError):
        align_subject(Sc, Sy, Tc, Ty)


def test_label_count_mismatch(rng):
    Sc, Sy = labelled(rng, 5, [1, 2])
    with pytest.raises(InvalidInput):
        align_subject(Sc, Sy[:-1], Sc, Sy)


def test_mat_from_vec_batch_shape(rng):
    x_al, _, _ = align_tangent_vectors(class_set(rng, 5, C=4), class_set(rng, 6, C=4))
    assert mat_from_vec_batch(x_al).shape == (5, 4, 4)
