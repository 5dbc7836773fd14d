import numpy as np
import pytest
from hypothesis import given, settings

from kalmanest.core_linalg import DimensionMismatch, NotPositiveDefinite
from kalmanest.random_instances import random_spd
from kalmanest.simulator import (
    GENERATOR_ID,
    ScheduleError,
    StateSpaceModel,
    batch_oracle_estimate,
    constant_velocity_model,
    derive_seed,
    propagate_moments,
    sample_ensemble,
    sample_trajectory,
    stack,
)
from kalmanest import batch_estimators as be

from conftest import model_arrays_from_seed, seeds


def scalar_model(phi=1.0, h=1.0, q=1.0, r=1.0):
    return StateSpaceModel(phi=[[phi]], h=[[h]], q=[[q]], r=[[r]])


def test_model_validation():
    with pytest.raises(NotPositiveDefinite, match="^r"):
        StateSpaceModel(phi=[[1.0]], h=[[1.0]], q=[[0.0]], r=[[0.0]])
    with pytest.raises(NotPositiveDefinite, match="^q"):
        StateSpaceModel(phi=[[1.0]], h=[[1.0]], q=[[-1.0]], r=[[1.0]])
    with pytest.raises(DimensionMismatch):
        StateSpaceModel(phi=np.eye(2), h=[[1.0]], q=np.eye(2), r=[[1.0]])
    StateSpaceModel(phi=[[1.0]], h=[[1.0]], q=[[0.0]], r=[[1.0]])


def test_per_step_schedules_and_horizon_check():
    m = StateSpaceModel(phi=[[[1.0]], [[2.0]]], h=[[1.0]], q=[[0.0]], r=[[[1.0]], [[2.0]], [[3.0]]])
    assert m.phi_at(1)[0, 0] == 2.0 and m.r_at(2).matrix[0, 0] == 3.0
    m.check_horizon(2)
    with pytest.raises(ScheduleError):
        m.check_horizon(3)
    with pytest.raises(ScheduleError):
        sample_trajectory(m, [0.0], [[1.0]], 3, 0)


def test_noiseless_dynamics_are_deterministic():
    phis = [np.array([[1.0, 0.5], [0.0, 0.9]]), np.array([[0.8, 0.0], [0.3, 1.1]]), np.array([[1.0, 0.0], [0.0, -1.0]])]
    m = StateSpaceModel(phi=phis, h=[[1.0, 0.0]], q=np.zeros((2, 2)), r=[[1.0]])
    x0 = np.array([1.0, -2.0])
    tr = sample_trajectory(m, x0, np.zeros((2, 2)), 3, 42)
    expect = x0
    np.testing.assert_array_equal(tr.states[0], x0)
    for k in range(3):
        expect = phis[k] @ expect
        np.testing.assert_array_equal(tr.states[k + 1], expect)


@given(seeds)
@settings(max_examples=20)
def test_same_seed_same_trajectory(seed):
    d = model_arrays_from_seed(seed)
    m = StateSpaceModel(phi=d["phi"], h=d["h"], q=d["q"], r=d["r"])
    a = sample_trajectory(m, d["x0_mean"], d["p0"], 7, seed)
    b = sample_trajectory(m, d["x0_mean"], d["p0"], 7, seed)
    assert a.states.tobytes() == b.states.tobytes()
    assert a.measurements.tobytes() == b.measurements.tobytes()
    c = sample_trajectory(m, d["x0_mean"], d["p0"], 7, seed + 1)
    assert not np.array_equal(a.measurements, c.measurements)


def test_ensemble_runs_match_single_trajectories():
    m = constant_velocity_model()
    X, Z, run_seeds = sample_ensemble(m, [0.0, 1.0], np.eye(2), 5, 9, 4)
    for i, s in enumerate(run_seeds):
        assert s == derive_seed(9, i)
        tr = sample_trajectory(m, [0.0, 1.0], np.eye(2), 5, s)
        np.testing.assert_array_equal(tr.states, X[i])
        np.testing.assert_array_equal(tr.measurements, Z[i])
    X2, Z2, _ = sample_ensemble(m, [0.0, 1.0], np.eye(2), 5, 9, 2)
    np.testing.assert_array_equal(X2, X[:2])


def test_generator_is_documented():
    assert GENERATOR_ID.startswith("numpy.random.Philox")


def test_moments_single_step():
    rng = np.random.default_rng(4)
    P0, H, R = random_spd(rng, 3), rng.standard_normal((2, 3)), random_spd(rng, 2)
    m = StateSpaceModel(phi=np.eye(3), h=H, q=np.zeros((3, 3)), r=R)
    mom = propagate_moments(m, np.zeros(3), P0, 0)
    np.testing.assert_allclose(mom.cov_ZZ.matrix, H @ P0 @ H.T + R, atol=1e-14)
    np.testing.assert_allclose(mom.cov_x_Z, P0 @ H.T, atol=1e-14)


def test_moments_static_scalar():
    # Phi = 1, Q = 0, H = 1: every z_j sees the same x, so Cov(x_K, z_j) = P0.
    m = scalar_model(q=0.0, r=0.5)
    mom = propagate_moments(m, [0.0], [[2.0]], 4)
    np.testing.assert_allclose(mom.cov_x_Z, np.full((1, 5), 2.0))
    np.testing.assert_allclose(mom.cov_ZZ.matrix, 2.0 * np.ones((5, 5)) + 0.5 * np.eye(5))


def test_moments_dimension_cap():
    m = StateSpaceModel(phi=[[1.0]], h=np.ones((10, 1)), q=[[1.0]], r=np.eye(10))
    with pytest.raises(DimensionMismatch):
        propagate_moments(m, [0.0], [[1.0]], 100)


def test_oracle_single_measurement_reduces_to_prior_gain():
    m = scalar_model(h=2.0, r=3.0)
    x, P = batch_oracle_estimate(propagate_moments(m, [0.0], [[1.5]], 0), [1.0])
    ref = be.min_variance_prior_gain(be.BatchProblem(W=[[2.0]], Q=[[3.0]], y=[1.0], prior_R=[[1.5]]))
    assert x[0] == pytest.approx(ref.beta_hat[0], abs=1e-15)
    assert P[0, 0] == pytest.approx(ref.error_cov.matrix[0, 0], abs=1e-15)


def test_oracle_zero_measurements_give_zero():
    m = constant_velocity_model()
    x, _ = batch_oracle_estimate(propagate_moments(m, np.zeros(2), np.eye(2), 6), np.zeros(7))
    np.testing.assert_array_equal(x, np.zeros(2))


def test_oracle_dimension_check():
    m = constant_velocity_model()
    with pytest.raises(DimensionMismatch):
        batch_oracle_estimate(propagate_moments(m, np.zeros(2), np.eye(2), 2), np.zeros(4))


def test_stack():
    np.testing.assert_array_equal(stack([np.array([1.0]), np.array([2.0, 3.0])]), [1.0, 2.0, 3.0])


def test_model_digest_stable():
    assert constant_velocity_model().digest() == constant_velocity_model().digest()
    assert constant_velocity_model().digest() != constant_velocity_model(r=2.0).digest()


@pytest.mark.slow
def test_random_walk_variance():
    K, N = 10, 100_000
    X, _, _ = sample_ensemble(scalar_model(), [0.0], [[0.0]], K, 123, N)
    var = X[:, K, 0].var(ddof=1)
    # standard error of a Gaussian sample variance is sigma^2 sqrt(2 / (N - 1))
    assert abs(var - K) <= 4.0 * K * np.sqrt(2.0 / (N - 1))


@pytest.mark.slow
def test_process_and_measurement_noise_are_white():
    N = 100_000
    m = scalar_model(phi=0.5, q=1.0, r=2.0)
    tr = sample_trajectory(m, [0.0], [[1.0]], N, 7)
    x, z = tr.states[:, 0], tr.measurements[:, 0]
    u = x[1:] - 0.5 * x[:-1]
    w = z - x
    for series in (u, w):
        s = series - series.mean()
        for lag in (1, 2, 3, 5, 10):
            rho = (s[lag:] @ s[:-lag]) / (s @ s)
            assert abs(rho) <= 4.0 / np.sqrt(N)


@pytest.mark.slow
def test_propagated_moments_match_sampling():
    N, K = 200_000, 3
    m = StateSpaceModel(phi=[[0.9, 0.4], [-0.2, 0.8]], h=[[1.0, 0.5]], q=[[0.3, 0.1], [0.1, 0.2]], r=[[0.7]])
    x0, P0 = np.array([1.0, -1.0]), np.array([[1.0, 0.3], [0.3, 0.5]])
    mom = propagate_moments(m, x0, P0, K)
    X, Z, _ = sample_ensemble(m, x0, P0, K, 99, N)
    xc = X[:, K] - mom.mean_x
    Zc = Z.reshape(N, -1) - mom.mean_Z
    for a, b, ref in ((xc, Zc, mom.cov_x_Z), (Zc, Zc, mom.cov_ZZ.matrix), (xc, xc, mom.cov_xx)):
        prods = np.einsum("ni,nj->nij", a, b)
        band = 4.0 * prods.std(axis=0, ddof=1) / np.sqrt(N)
        assert np.all(np.abs(prods.mean(axis=0) - ref) <= band)
    assert np.all(np.abs(X[:, K].mean(axis=0) - mom.mean_x) <= 4.0 * X[:, K].std(axis=0) / np.sqrt(N))
