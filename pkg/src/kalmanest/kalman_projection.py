"""One-shot prior-to-prior Kalman recursion obtained by orthogonal projection.

    x_{k+1|k} = Phi x_{k|k-1} + Phi P H^T [H P H^T + R]^{-1} (z - H x_{k|k-1})
    P_{k+1}   = Phi P {I - H^T [H P H^T + R]^{-1} H P} Phi^T + Q

The bracketed inverse is one Cholesky solve shared by both lines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core_linalg import DimensionMismatch, LinAlgError, SpdMatrix, as_matrix, as_vector, solve_spd, spd_check, symmetrize
from .kalman_bayes import log_gaussian_density
from .simulator import StateSpaceModel
from .trace import EmptyMeasurementSequence, FilterTrace, stack_trace

__all__ = [
    "EmptyMeasurementSequence",
    "ProjectionFilterState",
    "projection_filter_run",
    "projection_step",
]


@dataclass(frozen=True)
class ProjectionFilterState:
    k: int
    x_pred: np.ndarray
    P_pred: SpdMatrix

    def __post_init__(self):
        if self.k < 0:
            raise ValueError("time index must be >= 0")
        x = as_vector(self.x_pred, "x_pred")
        P = spd_check(self.P_pred, psd=True)
        if P.n != x.shape[0]:
            raise DimensionMismatch(f"x_pred has length {x.shape[0]} but P_pred is {P.shape}")
        object.__setattr__(self, "x_pred", x)
        object.__setattr__(self, "P_pred", P)


def _step(s: ProjectionFilterState, model_k, z):
    phi, H, Q, R = model_k
    phi = as_matrix(phi, "phi")
    H = as_matrix(H, "H")
    Q = spd_check(Q, psd=True)
    R = spd_check(R)
    z = as_vector(z, "z")
    n = s.x_pred.shape[0]
    if phi.shape != (n, n) or Q.n != n or H.shape != (R.n, n) or z.shape[0] != R.n:
        raise DimensionMismatch(
            f"phi {phi.shape}, H {H.shape}, Q {Q.shape}, R {R.shape}, z {z.shape} vs state {n}")
    P = s.P_pred.matrix
    HP = H @ P
    S = spd_check(symmetrize(HP @ H.T + R.matrix))
    SiHP = solve_spd(S, HP)                 # [H P H^T + R]^{-1} H P
    innov = z - H @ s.x_pred
    x_post = s.x_pred + SiHP.T @ innov      # P H^T [.]^{-1} (z - H x)
    P_post = P @ (np.eye(n) - H.T @ SiHP)   # P {I - H^T [.]^{-1} H P}
    x_next = phi @ s.x_pred + phi @ (SiHP.T @ innov)
    P_next = phi @ P_post @ phi.T + Q.matrix
    nxt = ProjectionFilterState(k=s.k + 1, x_pred=x_next, P_pred=spd_check(symmetrize(P_next), psd=True))
    detail = {
        "x_pred": s.x_pred, "P_pred": P,
        "x_post": x_post, "P_post": symmetrize(P_post),
        "innovations": innov, "innovation_covs": S.matrix, "gains": SiHP.T,
        "log_predictive": log_gaussian_density(z, H @ s.x_pred, S),
    }
    return nxt, detail


def projection_step(s: ProjectionFilterState, model_k, z) -> ProjectionFilterState:
    """Advance ``(x_{k|k-1}, P_k)`` to ``(x_{k+1|k}, P_{k+1})`` using ``z_k``.

    ``model_k`` is the tuple ``(Phi_k, H_k, Q_k, R_k)``.
    """
    return _step(s, model_k, z)[0]


def projection_filter_run(model: StateSpaceModel, z, x0, P0) -> FilterTrace:
    z = list(z)
    if not z:
        raise EmptyMeasurementSequence("at least one measurement is required")
    model.check_horizon(len(z) - 1, filtering=True)
    state = ProjectionFilterState(k=0, x_pred=x0, P_pred=P0)
    steps = []
    for k, zk in enumerate(z):
        try:
            state, detail = _step(state, model.at(k), zk)
        except LinAlgError as exc:
            raise type(exc)(f"step {k}: {exc}") from exc
        steps.append(detail)
    return stack_trace(steps, state.x_pred, state.P_pred.matrix)
