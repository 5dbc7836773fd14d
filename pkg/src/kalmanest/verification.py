"""Identity suite over random instances.

Each check returns the worst residual seen. The reference side of every
comparison is computed independently of the code under test, usually with
explicit ``numpy.linalg.inv`` inverses, which the estimators themselves
never use.
"""

from __future__ import annotations

import numpy as np

from . import batch_estimators as be
from .core_linalg import frobenius_relative, logdet, relative_deviation, spd_check, woodbury_posterior_cov
from .kalman_bayes import GaussianBelief, bayes_filter_run, correct, gaussian_product_decompose
from .kalman_projection import projection_filter_run
from .random_instances import random_batch, random_design, random_model_arrays, random_spd
from .simulator import StateSpaceModel, batch_oracle_estimate, propagate_moments, sample_trajectory

inv = np.linalg.inv

TOLERANCES = {
    "two_form": 1e-9,
    "gauss_markov_limit": 1e-5,
    "gauss_markov_unbiased": 1e-10,
    "projection_vs_bayes": 1e-12,
    "batch_oracle": 1e-8,
    "woodbury": 1e-10,
    "gain_duality": 1e-10,
    "determinant": 1e-9,
    "gaussian_product": 1e-9,
}


def _problem(d, prior=True) -> be.BatchProblem:
    return be.BatchProblem(W=d["W"], Q=d["Q"], y=d["y"], prior_R=d["R"] if prior else None)


def two_form_residual(rng, count: int, n_max: int = 8, m_max: int = 8) -> float:
    worst = 0.0
    for _ in range(count):
        p = _problem(random_batch(rng, n_max, m_max))
        a = be.min_variance_prior_gain(p)
        b = be.min_variance_prior_info(p)
        worst = max(worst, frobenius_relative(b.beta_hat, a.beta_hat),
                    frobenius_relative(b.error_cov.matrix, a.error_cov.matrix))
    return worst


def gauss_markov_limit_residual(rng, count: int, lam: float = 1e8, n_max: int = 8, m_max: int = 8) -> float:
    worst = 0.0
    for _ in range(count):
        d = random_batch(rng, n_max, m_max, full_rank=True)
        d["R"] = lam * np.eye(d["W"].shape[1])
        gm = be.gauss_markov(_problem(d, prior=False))
        mv = be.min_variance_prior_info(_problem(d))
        worst = max(worst, relative_deviation(mv.beta_hat, gm.beta_hat),
                    relative_deviation(mv.error_cov.matrix, gm.error_cov.matrix))
    return worst


def gauss_markov_unbiased_residual(rng, count: int) -> float:
    worst = 0.0
    for _ in range(count):
        d = random_batch(rng, full_rank=True)
        K = be.gauss_markov(_problem(d, prior=False)).gain
        worst = max(worst, float(np.max(np.abs(K @ d["W"] - np.eye(d["W"].shape[1])))))
    return worst


def random_model(rng, n_max: int, m_max: int) -> tuple[StateSpaceModel, np.ndarray, np.ndarray]:
    d = random_model_arrays(rng, n_max, m_max)
    return StateSpaceModel(phi=d["phi"], h=d["h"], q=d["q"], r=d["r"]), d["x0_mean"], d["p0"]


def trace_deviation(a, b) -> np.ndarray:
    """Per-step max relative deviation over prior and posterior means and covariances."""
    return np.array([
        max(relative_deviation(a.x_pred[k], b.x_pred[k]), relative_deviation(a.P_pred[k], b.P_pred[k]),
            relative_deviation(a.x_post[k], b.x_post[k]), relative_deviation(a.P_post[k], b.P_post[k]))
        for k in range(len(a))
    ])


def trace_scaled_deviation(a, b) -> float:
    """Max deviation per quantity, divided by that quantity's largest magnitude over the whole run.

    Unlike :func:`trace_deviation` this stays meaningful when a mean passes
    close to zero at some step, where a per-step ratio measures rounding
    of the terms that cancelled rather than any difference in the algebra.
    """
    worst = 0.0
    for name in ("x_pred", "P_pred", "x_post", "P_post"):
        A, B = getattr(a, name), getattr(b, name)
        scale = max(float(np.max(np.abs(A))), float(np.max(np.abs(B))), 1e-300)
        worst = max(worst, float(np.max(np.abs(A - B))) / scale)
    return worst


def projection_vs_bayes_residuals(rng, count: int, horizon: int = 50, n_max: int = 6,
                                  m_max: int = 6) -> tuple[float, float]:
    """Worst per-step relative deviation and worst run-scaled deviation."""
    worst = scaled = 0.0
    for _ in range(count):
        model, x0, P0 = random_model(rng, n_max, m_max)
        z = sample_trajectory(model, x0, P0, horizon - 1, int(rng.integers(2 ** 63))).measurements
        a, b = projection_filter_run(model, z, x0, P0), bayes_filter_run(model, z, x0, P0)
        worst = max(worst, float(trace_deviation(a, b).max()))
        scaled = max(scaled, trace_scaled_deviation(a, b))
    return worst, scaled


def projection_vs_bayes_residual(rng, count: int, horizon: int = 50, n_max: int = 6, m_max: int = 6) -> float:
    return projection_vs_bayes_residuals(rng, count, horizon, n_max, m_max)[0]


def batch_oracle_residual(rng, count: int, horizon_max: int = 10, n_max: int = 4, m_max: int = 3) -> float:
    worst = 0.0
    for _ in range(count):
        model, x0, P0 = random_model(rng, n_max, m_max)
        K = int(rng.integers(0, horizon_max + 1))
        z = sample_trajectory(model, x0, P0, K, int(rng.integers(2 ** 63))).measurements
        tr = projection_filter_run(model, z, x0, P0)
        x, P = batch_oracle_estimate(propagate_moments(model, x0, P0, K), z)
        worst = max(worst, relative_deviation(x, tr.x_post[-1]), relative_deviation(P, tr.P_post[-1]))
    return worst


def _phr(rng, n_max: int = 8, m_max: int = 8):
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    return random_spd(rng, n), random_design(rng, m, n), random_spd(rng, m)


def woodbury_residual(rng, count: int) -> float:
    worst = 0.0
    for _ in range(count):
        P, H, R = _phr(rng)
        direct = inv(inv(P) + H.T @ inv(R) @ H)
        got = woodbury_posterior_cov(spd_check(P), H, spd_check(R)).matrix
        worst = max(worst, frobenius_relative(got, direct))
    return worst


def gain_duality_residual(rng, count: int) -> float:
    worst = 0.0
    for _ in range(count):
        P, H, R = _phr(rng)
        K = correct(GaussianBelief(np.zeros(P.shape[0]), P), H, R, np.zeros(R.shape[0])).gain
        info_gain = inv(inv(P) + H.T @ inv(R) @ H) @ H.T @ inv(R)
        worst = max(worst, relative_deviation(K, info_gain))
    return worst


def determinant_residual(rng, count: int) -> float:
    worst = 0.0
    for _ in range(count):
        P, H, R = _phr(rng)
        lhs = logdet(spd_check(R + H @ P @ H.T))
        info = inv(P) + H.T @ inv(R) @ H
        rhs = logdet(spd_check(R)) + logdet(spd_check(P)) + logdet(spd_check(0.5 * (info + info.T)))
        worst = max(worst, abs(lhs - rhs))
    return worst


def gaussian_product_residual(rng, count: int, probes: int = 100) -> float:
    worst = 0.0
    for _ in range(count):
        P, H, R = _phr(rng, 6, 6)
        n = P.shape[0]
        prior = GaussianBelief(rng.standard_normal(n), P)
        z = H @ prior.mean + rng.standard_normal(H.shape[0])
        for _ in range(probes):
            x = prior.mean + 3.0 * rng.standard_normal(n)
            lhs, rhs = gaussian_product_decompose(H, R, prior, z, x)
            worst = max(worst, abs(lhs - rhs))
    return worst


def identity_suite(rng, instances: int) -> dict[str, float]:
    """All identity residuals; ``instances`` scales the number of random draws per check."""
    few = max(1, instances // 10)
    return {
        "two_form": two_form_residual(rng, instances),
        "gauss_markov_limit": gauss_markov_limit_residual(rng, instances),
        "gauss_markov_unbiased": gauss_markov_unbiased_residual(rng, instances),
        "projection_vs_bayes": projection_vs_bayes_residual(rng, few),
        "batch_oracle": batch_oracle_residual(rng, instances),
        "woodbury": woodbury_residual(rng, instances),
        "gain_duality": gain_duality_residual(rng, instances),
        "determinant": determinant_residual(rng, instances),
        "gaussian_product": gaussian_product_residual(rng, few, probes=20),
    }
