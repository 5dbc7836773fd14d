from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class EmptyMeasurementSequence(ValueError):
    pass


@dataclass(frozen=True)
class FilterTrace:
    """Per-step record of a filter run over ``z_0..z_K``.

    Row ``k`` of ``x_pred``/``P_pred`` is the prior ``x_{k|k-1}``, ``P_k``;
    ``x_post``/``P_post`` hold ``x_{k|k}``, ``P_{k|k}``. ``x_next``/``P_next``
    is the one-step prediction ``x_{K+1|K}`` left after the last measurement.
    """

    x_pred: np.ndarray           # (K+1, n)
    P_pred: np.ndarray           # (K+1, n, n)
    x_post: np.ndarray           # (K+1, n)
    P_post: np.ndarray           # (K+1, n, n)
    innovations: np.ndarray      # (K+1, m)
    innovation_covs: np.ndarray  # (K+1, m, m)
    gains: np.ndarray            # (K+1, n, m)
    log_predictive: np.ndarray   # (K+1,)
    x_next: np.ndarray
    P_next: np.ndarray

    def __len__(self) -> int:
        return self.x_pred.shape[0]


def stack_trace(steps: list[dict], x_next, P_next) -> FilterTrace:
    keys = ("x_pred", "P_pred", "x_post", "P_post", "innovations",
            "innovation_covs", "gains", "log_predictive")
    return FilterTrace(**{k: np.array([s[k] for s in steps]) for k in keys},
                       x_next=np.asarray(x_next), P_next=np.asarray(P_next))
