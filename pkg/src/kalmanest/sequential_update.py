"""Folding a new measurement block into an existing estimate.

Given ``(beta_hat, N)`` with ``N = E[(beta - beta_hat)(beta - beta_hat)^T]``
and new data ``y = W beta + eps`` (``eps`` uncorrelated with ``beta`` and
with the past data), the update projects ``beta`` onto the innovation
``y - W beta_hat``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_linalg import (
    DimensionMismatch,
    SpdMatrix,
    as_matrix,
    as_vector,
    solve_spd,
    spd_check,
    symmetrize,
)


@dataclass(frozen=True)
class PriorEstimate:
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
class MeasurementBlock:
    W: np.ndarray
    Q: SpdMatrix
    y: np.ndarray

    def __post_init__(self):
        W = as_matrix(self.W, "W")
        Q = spd_check(self.Q)
        y = as_vector(self.y, "y")
        if Q.n != W.shape[0] or y.shape[0] != W.shape[0]:
            raise DimensionMismatch(f"W is {W.shape}, Q is {Q.shape}, y has length {y.shape[0]}")
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "y", y)


def _check(prior: PriorEstimate, blk: MeasurementBlock) -> None:
    if blk.W.shape[1] != prior.mean.shape[0]:
        raise DimensionMismatch(
            f"block W has {blk.W.shape[1]} columns, estimate has dimension {prior.mean.shape[0]}")


def innovation(prior: PriorEstimate, blk: MeasurementBlock) -> np.ndarray:
    _check(prior, blk)
    return blk.y - blk.W @ prior.mean


def innovation_covariance(prior: PriorEstimate, blk: MeasurementBlock) -> SpdMatrix:
    _check(prior, blk)
    return spd_check(symmetrize(blk.W @ prior.cov.matrix @ blk.W.T + blk.Q.matrix))


def update(prior: PriorEstimate, blk: MeasurementBlock, *, joseph: bool = False) -> PriorEstimate:
    """Minimum-variance estimate given the old data and the new block.

    ``joseph=True`` evaluates the covariance as
    ``(I - K W) N (I - K W)^T + K Q K^T``, which is the same quantity but
    keeps positive semidefiniteness under rounding over long runs.
    """
    S = innovation_covariance(prior, blk)
    N = prior.cov.matrix
    WN = blk.W @ N
    K = solve_spd(S, WN).T
    mean = prior.mean + K @ innovation(prior, blk)
    if joseph:
        A = np.eye(N.shape[0]) - K @ blk.W
        cov = A @ N @ A.T + K @ blk.Q.matrix @ K.T
    else:
        cov = N - K @ WN
    return PriorEstimate(mean=mean, cov=spd_check(symmetrize(cov), psd=True))
