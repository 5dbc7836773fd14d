"""Batch linear estimators for ``y = W beta + eps``.

All estimators assume a zero-mean ``beta``; callers with a nonzero prior
mean centre the data first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_linalg import (
    DimensionMismatch,
    LinAlgError,
    NotPositiveDefinite,
    SpdMatrix,
    as_matrix,
    as_vector,
    inverse_spd,
    solve_spd,
    spd_check,
    symmetrize,
)

RANK_PIVOT_RATIO = 1e-10


class RankDeficient(LinAlgError):
    pass


@dataclass(frozen=True)
class BatchProblem:
    """Stacked observation model ``y = W beta + eps``.

    ``Q = E[eps eps^T]``; ``prior_R = E[beta beta^T]`` or ``None`` when no
    prior is available (Gauss-Markov setting).
    """

    W: np.ndarray
    Q: SpdMatrix
    y: np.ndarray
    prior_R: SpdMatrix | None = None

    def __post_init__(self):
        W = as_matrix(self.W, "W")
        Q = spd_check(self.Q)
        y = as_vector(self.y, "y")
        m, n = W.shape
        if Q.n != m or y.shape[0] != m:
            raise DimensionMismatch(f"W is {W.shape} but Q is {Q.shape} and y has length {y.shape[0]}")
        R = self.prior_R
        if R is not None:
            R = spd_check(R, psd=True)
            if R.n != n:
                raise DimensionMismatch(f"prior_R is {R.shape}, expected {(n, n)}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "prior_R", R)

    @property
    def n(self) -> int:
        return self.W.shape[1]

    @property
    def m(self) -> int:
        return self.W.shape[0]


@dataclass(frozen=True)
class BatchEstimate:
    beta_hat: np.ndarray
    error_cov: SpdMatrix
    gain: np.ndarray


@dataclass(frozen=True)
class SecondMoments:
    """``cov_beta_y = E[beta y^T]`` and ``cov_yy = E[y y^T]``."""

    cov_beta_y: np.ndarray
    cov_yy: SpdMatrix

    def __post_init__(self):
        object.__setattr__(self, "cov_beta_y", as_matrix(self.cov_beta_y, "cov_beta_y"))
        object.__setattr__(self, "cov_yy", spd_check(self.cov_yy))
        if self.cov_beta_y.shape[1] != self.cov_yy.n:
            raise DimensionMismatch(
                f"E[beta y^T] is {self.cov_beta_y.shape} but E[y y^T] is {self.cov_yy.shape}")


def _psd(M) -> SpdMatrix:
    return spd_check(symmetrize(M), psd=True)


def _require_prior(p: BatchProblem) -> SpdMatrix:
    if p.prior_R is None:
        raise ValueError("this estimator needs a prior covariance (prior_R)")
    return p.prior_R


def information_matrix(p: BatchProblem) -> np.ndarray:
    """``W^T Q^{-1} W``."""
    return symmetrize(p.W.T @ solve_spd(p.Q, p.W))


def gauss_markov(p: BatchProblem) -> BatchEstimate:
    """Minimum-variance unbiased estimate; no prior information on ``beta``."""
    QiW = solve_spd(p.Q, p.W)
    try:
        A = spd_check(symmetrize(p.W.T @ QiW))
    except NotPositiveDefinite as exc:
        raise RankDeficient("W^T Q^-1 W is singular; W lacks full column rank") from exc
    if A.pivots.min() <= RANK_PIVOT_RATIO * A.pivots.max():
        raise RankDeficient("W^T Q^-1 W is numerically singular; W lacks full column rank")
    K = solve_spd(A, QiW.T)
    return BatchEstimate(beta_hat=K @ p.y, error_cov=spd_check(inverse_spd(A)), gain=K)


def min_variance_gain(mom: SecondMoments) -> np.ndarray:
    """Gain ``K = E[beta y^T] E[y y^T]^{-1}`` of the minimum-variance linear estimate."""
    return solve_spd(mom.cov_yy, mom.cov_beta_y.T).T


def moments_from_problem(p: BatchProblem) -> SecondMoments:
    R = _require_prior(p).matrix
    return SecondMoments(cov_beta_y=R @ p.W.T,
                         cov_yy=spd_check(symmetrize(p.W @ R @ p.W.T + p.Q.matrix)))


def min_variance_estimate(mom: SecondMoments, y, cov_beta) -> BatchEstimate:
    """Estimate and error covariance ``E[beta beta^T] - K E[y beta^T]`` from moments."""
    K = min_variance_gain(mom)
    cov = as_matrix(cov_beta, "cov_beta") - K @ mom.cov_beta_y.T
    return BatchEstimate(beta_hat=K @ as_vector(y, "y"), error_cov=_psd(cov), gain=K)


def min_variance_prior_gain(p: BatchProblem) -> BatchEstimate:
    """Gain form: ``beta_hat = R W^T (W R W^T + Q)^{-1} y``."""
    R = _require_prior(p).matrix
    S = spd_check(symmetrize(p.W @ R @ p.W.T + p.Q.matrix))
    WR = p.W @ R
    K = solve_spd(S, WR).T
    cov = R - K @ WR
    return BatchEstimate(beta_hat=K @ p.y, error_cov=_psd(cov), gain=K)


def min_variance_prior_info(p: BatchProblem) -> BatchEstimate:
    """Information form: ``beta_hat = (W^T Q^{-1} W + R^{-1})^{-1} W^T Q^{-1} y``."""
    R = spd_check(_require_prior(p))
    QiW = solve_spd(p.Q, p.W)
    info = spd_check(symmetrize(p.W.T @ QiW + inverse_spd(R)))
    K = solve_spd(info, QiW.T)
    return BatchEstimate(beta_hat=K @ p.y, error_cov=spd_check(inverse_spd(info), psd=True), gain=K)


def linear_function_estimate(T, e: BatchEstimate) -> BatchEstimate:
    """Estimate of ``T beta``: transform the mean, gain and covariance."""
    T = as_matrix(T, "T")
    if T.shape[1] != e.beta_hat.shape[0]:
        raise DimensionMismatch(f"T has {T.shape[1]} columns, estimate has dimension {e.beta_hat.shape[0]}")
    return BatchEstimate(beta_hat=T @ e.beta_hat,
                         error_cov=_psd(T @ e.error_cov.matrix @ T.T),
                         gain=T @ e.gain)


def error_covariance_of_linear_estimator(K, p: BatchProblem) -> np.ndarray:
    """Exact error covariance of ``beta_hat = K y`` for any gain ``K``.

    ``K (W R W^T + Q) K^T - K W R - R W^T K^T + R``
    """
    R = _require_prior(p).matrix
    K = as_matrix(K, "K")
    if K.shape != (p.n, p.m):
        raise DimensionMismatch(f"K has shape {K.shape}, expected {(p.n, p.m)}")
    Eyy = p.W @ R @ p.W.T + p.Q.matrix
    KWR = K @ p.W @ R
    return K @ Eyy @ K.T - KWR - KWR.T + R
