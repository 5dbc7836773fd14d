import math

import numpy as np
import pytest
from hypothesis import given, settings

from kalmanest.core_linalg import (
    SOLVE_TOL,
    AsymmetryExceedsTol,
    DimensionMismatch,
    NonFiniteEntries,
    NotPositiveDefinite,
    NotSquare,
    SpdMatrix,
    logdet,
    solve_spd,
    spd_check,
    symmetrize,
    woodbury_posterior_cov,
)
from kalmanest.random_instances import random_design, random_spd

from conftest import seeds


def test_identity_certified_with_unit_pivots():
    A = spd_check(np.eye(3))
    assert isinstance(A, SpdMatrix)
    np.testing.assert_array_equal(A.pivots, np.ones(3))
    assert not A.semidefinite and not A.ill_conditioned


def test_diagonally_dominant_certified():
    spd_check([[2.0, 1.0], [1.0, 2.0]])


def test_indefinite_rejected():
    with pytest.raises(NotPositiveDefinite):
        spd_check([[1.0, 2.0], [2.0, 1.0]])


@pytest.mark.parametrize("M, exc", [
    (np.ones((2, 3)), NotSquare),
    ([[1.0, 0.5], [0.0, 1.0]], AsymmetryExceedsTol),
    ([[1.0, np.nan], [np.nan, 1.0]], NonFiniteEntries),
])
def test_rejections(M, exc):
    with pytest.raises(exc):
        spd_check(M)


def test_asymmetry_within_tolerance_is_accepted():
    M = np.array([[1.0, 0.5], [0.5 + 1e-12, 1.0]])
    A = spd_check(M)
    np.testing.assert_array_equal(A.matrix, A.matrix.T)


def test_psd_mode_accepts_singular_and_rejects_negative():
    Z = spd_check(np.zeros((2, 2)), psd=True)
    assert Z.singular
    with pytest.raises(NotPositiveDefinite):
        spd_check(np.zeros((2, 2)))
    with pytest.raises(NotPositiveDefinite):
        spd_check([[1.0, 0.0], [0.0, -1.0]], psd=True)
    rank1 = spd_check([[1.0, 1.0], [1.0, 1.0]], psd=True)
    np.testing.assert_allclose(rank1.factor @ rank1.factor.T, [[1.0, 1.0], [1.0, 1.0]], atol=1e-15)


def test_ill_conditioned_flag_is_a_warning_not_an_error():
    A = spd_check(np.diag([1.0, 1e-13]))
    assert A.ill_conditioned
    assert not spd_check(np.eye(2)).ill_conditioned


def test_certified_arrays_are_read_only():
    A = spd_check(np.eye(2))
    with pytest.raises(ValueError):
        A.matrix[0, 0] = 5.0


@given(seeds)
def test_spd_check_is_idempotent(seed):
    rng = np.random.default_rng(seed)
    A = spd_check(random_spd(rng, int(rng.integers(1, 9))))
    B = spd_check(A)
    np.testing.assert_array_equal(A.matrix, B.matrix)
    np.testing.assert_array_equal(spd_check(A.matrix).matrix, A.matrix)


def test_solve_examples():
    B = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(solve_spd(spd_check(np.eye(3)), B), B)
    np.testing.assert_allclose(solve_spd(spd_check([[4.0]]), [[2.0]]), [[0.5]], rtol=0, atol=1e-15)
    np.testing.assert_allclose(solve_spd(spd_check(np.diag([2.0, 4.0])), [[1.0], [1.0]]),
                               [[0.5], [0.25]], rtol=0, atol=1e-15)


def test_solve_vector_keeps_shape():
    x = solve_spd(spd_check(np.diag([2.0, 4.0])), np.array([1.0, 1.0]))
    assert x.shape == (2,)


def test_solve_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        solve_spd(spd_check(np.eye(2)), np.ones(3))


@given(seeds)
def test_solve_residual_bound(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    A = spd_check(random_spd(rng, n))
    B = rng.standard_normal((n, int(rng.integers(1, 5))))
    X = solve_spd(A, B)
    assert np.max(np.abs(A.matrix @ X - B)) <= SOLVE_TOL * np.max(np.abs(B))


def test_woodbury_scalar_and_zero_h():
    np.testing.assert_allclose(woodbury_posterior_cov(spd_check([[2.0]]), [[1.0]], spd_check([[2.0]])).matrix,
                               [[1.0]], atol=1e-15)
    P = spd_check(random_spd(np.random.default_rng(1), 3))
    out = woodbury_posterior_cov(P, np.zeros((2, 3)), spd_check(np.eye(2)))
    np.testing.assert_array_equal(out.matrix, P.matrix)


@given(seeds)
@settings(max_examples=50)
def test_woodbury_matches_direct_inverse(seed):
    rng = np.random.default_rng(seed)
    n, m = (int(v) for v in rng.integers(1, 9, size=2))
    P, H, R = random_spd(rng, n), random_design(rng, m, n), random_spd(rng, m)
    inv = np.linalg.inv
    direct = inv(inv(P) + H.T @ inv(R) @ H)
    got = woodbury_posterior_cov(spd_check(P), H, spd_check(R)).matrix
    assert np.linalg.norm(got - direct) <= 1e-10 * np.linalg.norm(direct)


def test_logdet_examples():
    assert logdet(spd_check(np.eye(4))) == 0.0
    assert logdet(spd_check([[4.0]])) == pytest.approx(math.log(4.0), abs=1e-15)
    assert logdet(spd_check(np.diag([2.0, 3.0]))) == pytest.approx(math.log(6.0), abs=1e-15)


def test_logdet_and_solve_refuse_singular_psd():
    Z = spd_check(np.zeros((2, 2)), psd=True)
    with pytest.raises(NotPositiveDefinite):
        logdet(Z)
    with pytest.raises(NotPositiveDefinite):
        solve_spd(Z, np.ones(2))


@given(seeds)
@settings(max_examples=50)
def test_determinant_identity_corrected_form(seed):
    rng = np.random.default_rng(seed)
    n, m = (int(v) for v in rng.integers(1, 9, size=2))
    P, H, R = random_spd(rng, n), random_design(rng, m, n), random_spd(rng, m)
    inv = np.linalg.inv
    info = symmetrize(inv(P) + H.T @ inv(R) @ H)
    lhs = logdet(spd_check(R + H @ P @ H.T))
    rhs = logdet(spd_check(R)) + logdet(spd_check(P)) + logdet(spd_check(info))
    assert abs(lhs - rhs) <= 1e-9


def test_symmetrize_examples():
    S = random_spd(np.random.default_rng(2), 4)
    np.testing.assert_array_equal(symmetrize(S), S)
    np.testing.assert_array_equal(symmetrize([[0.0, 2.0], [0.0, 0.0]]), [[0.0, 1.0], [1.0, 0.0]])


@given(seeds)
def test_symmetrize_residual_is_antisymmetric(seed):
    M = np.random.default_rng(seed).standard_normal((5, 5))
    D = M - symmetrize(M)
    np.testing.assert_allclose(D, -D.T, atol=1e-15)
