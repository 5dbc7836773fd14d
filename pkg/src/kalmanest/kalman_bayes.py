"""Predict/correct Kalman filter in closed Gaussian form.

The belief ``p(x_k | Z_k)`` stays Gaussian, so the prediction integral and
the Bayes correction reduce to operations on a mean and a covariance.
Densities are handled as log-densities throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .core_linalg import (
    DimensionMismatch,
    LinAlgError,
    NotPositiveDefinite,
    SpdMatrix,
    as_matrix,
    as_vector,
    inverse_spd,
    logdet,
    solve_spd,
    spd_check,
    symmetrize,
)
from .simulator import StateSpaceModel
from .trace import EmptyMeasurementSequence, FilterTrace, stack_trace

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class GaussianBelief:
    mean: np.ndarray
    cov: SpdMatrix

    def __post_init__(self):
        mean = as_vector(self.mean, "mean")
        cov = spd_check(self.cov, psd=True)
        if cov.n != mean.shape[0]:
            raise DimensionMismatch(f"mean has length {mean.shape[0]} but cov is {cov.shape}")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)


@dataclass(frozen=True)
class CorrectionResult:
    posterior: GaussianBelief
    gain: np.ndarray
    innovation: np.ndarray
    innovation_cov: SpdMatrix
    log_predictive: float


def log_gaussian_density(x, mean, cov: SpdMatrix) -> float:
    """``log N(x; mean, cov)`` through the Cholesky factor of ``cov``."""
    cov = spd_check(cov)
    d = as_vector(x, "x") - as_vector(mean, "mean")
    if d.shape[0] != cov.n:
        raise DimensionMismatch(f"vector length {d.shape[0]} does not match covariance {cov.shape}")
    if cov.singular:
        raise NotPositiveDefinite("density of a singular Gaussian")
    white = scipy.linalg.solve_triangular(cov.factor, d, lower=True, check_finite=False)
    return -0.5 * (cov.n * LOG_2PI + logdet(cov) + float(white @ white))


def predict(b: GaussianBelief, phi, Q: SpdMatrix) -> GaussianBelief:
    phi = as_matrix(phi, "phi")
    Q = spd_check(Q, psd=True)
    n = b.mean.shape[0]
    if phi.shape != (n, n) or Q.n != n:
        raise DimensionMismatch(f"phi {phi.shape} / Q {Q.shape} do not match state dimension {n}")
    cov = phi @ b.cov.matrix @ phi.T + Q.matrix
    return GaussianBelief(mean=phi @ b.mean, cov=spd_check(symmetrize(cov), psd=True))


def _measurement_args(b: GaussianBelief, H, R, z):
    H = as_matrix(H, "H")
    R = spd_check(R)
    z = as_vector(z, "z")
    if H.shape != (R.n, b.mean.shape[0]) or z.shape[0] != R.n:
        raise DimensionMismatch(f"H {H.shape}, R {R.shape}, z {z.shape} inconsistent with state {b.mean.shape[0]}")
    return H, R, z


def correct(b: GaussianBelief, H, R: SpdMatrix, z, *, joseph: bool = False) -> CorrectionResult:
    """Gain-form correction ``x + K (z - H x)``, ``(I - K H) P``.

    ``joseph=True`` evaluates the covariance as ``(I-KH) P (I-KH)^T + K R K^T``.
    """
    H, R, z = _measurement_args(b, H, R, z)
    P = b.cov.matrix
    HP = H @ P
    S = spd_check(symmetrize(HP @ H.T + R.matrix))
    K = solve_spd(S, HP).T
    innov = z - H @ b.mean
    if joseph:
        A = np.eye(P.shape[0]) - K @ H
        cov = A @ P @ A.T + K @ R.matrix @ K.T
    else:
        cov = P - K @ HP
    post = GaussianBelief(mean=b.mean + K @ innov, cov=spd_check(symmetrize(cov), psd=True))
    return CorrectionResult(posterior=post, gain=K, innovation=innov, innovation_cov=S,
                            log_predictive=log_gaussian_density(z, H @ b.mean, S))


def information_correct(b: GaussianBelief, H, R: SpdMatrix, z) -> CorrectionResult:
    """Correction through the information equations.

    ``P_post^{-1} = P^{-1} + H^T R^{-1} H`` and
    ``P_post^{-1} x_post = P^{-1} x + H^T R^{-1} z``. The prior covariance
    must be invertible; no regularisation is attempted.
    """
    H, R, z = _measurement_args(b, H, R, z)
    try:
        P = spd_check(b.cov)
    except NotPositiveDefinite as exc:
        raise NotPositiveDefinite("information form needs an invertible prior covariance") from exc
    S = spd_check(symmetrize(H @ P.matrix @ H.T + R.matrix))
    innov = z - H @ b.mean
    log_pred = log_gaussian_density(z, H @ b.mean, S)
    if not np.any(H):
        return CorrectionResult(posterior=b, gain=np.zeros(H.T.shape), innovation=innov,
                                innovation_cov=S, log_predictive=log_pred)
    RiH = solve_spd(R, H)
    info = spd_check(symmetrize(inverse_spd(P) + H.T @ RiH))
    info_mean = solve_spd(P, b.mean) + RiH.T @ z
    cov = inverse_spd(info)
    post = GaussianBelief(mean=solve_spd(info, info_mean), cov=spd_check(cov, psd=True))
    return CorrectionResult(posterior=post, gain=cov @ RiH.T, innovation=innov,
                            innovation_cov=S, log_predictive=log_pred)


def gaussian_product_decompose(H, R: SpdMatrix, prior: GaussianBelief, z, x_probe) -> tuple[float, float]:
    """Both sides of ``N(z; Hx, R) N(x; m, P) = N(z; Hm, S) N(x; m_post, P_post)`` in logs.

    The two values agree for every probe ``x`` when the determinant identity
    and the completed square both hold.
    """
    H, R, z = _measurement_args(prior, H, R, z)
    x = as_vector(x_probe, "x_probe")
    res = correct(prior, H, R, z)
    lhs = log_gaussian_density(z, H @ x, R) + log_gaussian_density(x, prior.mean, prior.cov)
    rhs = res.log_predictive + log_gaussian_density(x, res.posterior.mean, res.posterior.cov)
    return lhs, rhs


def bayes_filter_run(model: StateSpaceModel, z, x0, P0, *, joseph: bool = False) -> FilterTrace:
    """Alternate correct/predict over ``z_0..z_K`` starting from the prior ``(x0, P0)``."""
    z = list(z)
    if not z:
        raise EmptyMeasurementSequence("at least one measurement is required")
    model.check_horizon(len(z) - 1, filtering=True)
    belief = GaussianBelief(x0, P0)
    steps = []
    for k, zk in enumerate(z):
        phi, H, Q, R = model.at(k)
        try:
            res = correct(belief, H, R, zk, joseph=joseph)
            nxt = predict(res.posterior, phi, Q)
        except LinAlgError as exc:
            raise type(exc)(f"step {k}: {exc}") from exc
        steps.append({
            "x_pred": belief.mean, "P_pred": belief.cov.matrix,
            "x_post": res.posterior.mean, "P_post": res.posterior.cov.matrix,
            "innovations": res.innovation, "innovation_covs": res.innovation_cov.matrix,
            "gains": res.gain, "log_predictive": res.log_predictive,
        })
        belief = nxt
    return stack_trace(steps, belief.mean, belief.cov.matrix)
