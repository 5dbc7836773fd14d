"""Monte-Carlo filter-consistency statistics (NEES, NIS, RMSE).

Both statistics are averaged over ``runs`` trajectories and ``K+1`` time
steps, but their intervals differ:

* NEES: at each step the run-average is chi-square(``runs * n``) / ``runs``.
  Estimation errors are correlated in time, so averaging over steps does not
  add degrees of freedom; that per-step interval is used for the time
  average too (conservative).
* NIS: innovations of a correctly specified filter are white, so all
  ``runs * (K+1)`` draws are independent and the interval uses
  ``runs * (K+1) * m`` degrees of freedom.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.stats

from .core_linalg import spd_check
from .kalman_bayes import bayes_filter_run
from .kalman_projection import projection_filter_run
from .simulator import StateSpaceModel, sample_ensemble


@dataclass
class ConsistencyReport:
    rmse_per_component: list[float]
    mean_nees: float
    nees_bounds: tuple[float, float]
    mean_nis: float
    nis_bounds: tuple[float, float]
    nees_dof: int
    nis_dof: int
    confidence: float
    identity_residuals: dict[str, float] = field(default_factory=dict)

    @property
    def nees_ok(self) -> bool:
        return self.nees_bounds[0] <= self.mean_nees <= self.nees_bounds[1]

    @property
    def nis_ok(self) -> bool:
        return self.nis_bounds[0] <= self.mean_nis <= self.nis_bounds[1]


def chi2_mean_bounds(dim: int, samples: int, confidence: float = 0.99) -> tuple[float, float]:
    """Two-sided interval for the average of ``samples`` chi-square(dim) draws."""
    dof = dim * samples
    alpha = 1.0 - confidence
    lo, hi = scipy.stats.chi2.ppf([alpha / 2, 1 - alpha / 2], dof)
    return float(lo / samples), float(hi / samples)


def normalized_squares(err: np.ndarray, covs: np.ndarray) -> np.ndarray:
    """``e_k^T C_k^{-1} e_k`` for stacked errors ``(K, d)`` and covariances ``(K, d, d)``."""
    out = np.empty(err.shape[0])
    for k in range(err.shape[0]):
        C = spd_check(covs[k])
        w = np.linalg.solve(C.factor, err[k])
        out[k] = w @ w
    return out


def run_consistency(model: StateSpaceModel, x0_mean, P0, horizon: int, runs: int,
                    master_seed: int, *, filter_model: StateSpaceModel | None = None,
                    variant: str = "bayes", joseph: bool = False,
                    confidence: float = 0.99) -> ConsistencyReport:
    """Simulate with ``model``; filter with ``filter_model`` (defaults to the truth)."""
    fmodel = model if filter_model is None else filter_model
    X, Z, _ = sample_ensemble(model, x0_mean, P0, horizon, master_seed, runs)
    steps = horizon + 1
    nees = np.empty((runs, steps))
    nis = np.empty((runs, steps))
    sq = np.zeros(model.n)
    for i in range(runs):
        if variant == "projection":
            tr = projection_filter_run(fmodel, Z[i], x0_mean, P0)
        else:
            tr = bayes_filter_run(fmodel, Z[i], x0_mean, P0, joseph=joseph)
        err = X[i] - tr.x_post
        sq += np.sum(err ** 2, axis=0)
        nees[i] = normalized_squares(err, tr.P_post)
        nis[i] = normalized_squares(tr.innovations, tr.innovation_covs)
    samples = runs * steps
    return ConsistencyReport(
        rmse_per_component=[float(v) for v in np.sqrt(sq / samples)],
        mean_nees=float(nees.mean()),
        nees_bounds=chi2_mean_bounds(model.n, runs, confidence),
        mean_nis=float(nis.mean()),
        nis_bounds=chi2_mean_bounds(model.m, samples, confidence),
        nees_dof=model.n * runs,
        nis_dof=model.m * samples,
        confidence=confidence,
    )
