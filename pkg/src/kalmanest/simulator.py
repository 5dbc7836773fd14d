"""Linear-Gaussian state-space model, seeded sampler and exact moment propagation.

Model::

    x_{k+1} = Phi_k x_k + u_k,   u_k ~ N(0, Q_k)
    z_k     = H_k x_k + w_k,     w_k ~ N(0, R_k)
    x_0     ~ N(x0_mean, P0)

Randomness comes from numpy's counter-based Philox bit generator. Every
trajectory seed is split by ``SeedSequence`` into three independent
substreams, one each for ``x_0``, ``{u_k}`` and ``{w_k}``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .batch_estimators import SecondMoments, min_variance_estimate
from .core_linalg import (
    DimensionMismatch,
    LinAlgError,
    SpdMatrix,
    as_matrix,
    as_vector,
    spd_check,
    symmetrize,
)

GENERATOR_ID = f"numpy.random.Philox(4x64)+SeedSequence/numpy-{np.__version__}"
MAX_STACKED_DIM = 1000


class ScheduleError(ValueError):
    pass


def _labelled(cert, label):
    def wrapped(M):
        try:
            return cert(M)
        except LinAlgError as exc:
            raise type(exc)(f"{label}: {exc}") from None
    return wrapped


def _schedule(value, name: str, cert):
    """Constant matrix, or a per-step tuple when given a list of matrices / 3-D array."""
    if isinstance(value, SpdMatrix):
        return value
    if isinstance(value, (list, tuple)):
        if not value:
            raise ScheduleError(f"{name}: empty schedule")
        if isinstance(value[0], SpdMatrix) or np.ndim(value[0]) == 2:
            return tuple(_labelled(cert, f"{name}[{i}]")(v) for i, v in enumerate(value))
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 3:
        return tuple(_labelled(cert, f"{name}[{i}]")(a) for i, a in enumerate(arr))
    return _labelled(cert, name)(arr)


def _shape(M) -> tuple[int, int]:
    return M.shape


@dataclass(frozen=True)
class StateSpaceModel:
    """Schedules ``Phi_k, H_k, Q_k, R_k``; each is a constant matrix or a per-step tuple."""

    phi: np.ndarray | tuple
    h: np.ndarray | tuple
    q: SpdMatrix | tuple
    r: SpdMatrix | tuple

    def __post_init__(self):
        phi = _schedule(self.phi, "phi", as_matrix)
        h = _schedule(self.h, "h", as_matrix)
        q = _schedule(self.q, "q", lambda M: spd_check(M, psd=True))
        r = _schedule(self.r, "r", spd_check)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "r", r)
        n, m = self.n, self.m
        for name, sched, shape in (("phi", phi, (n, n)), ("h", h, (m, n)),
                                   ("q", q, (n, n)), ("r", r, (m, m))):
            items = sched if isinstance(sched, tuple) else (sched,)
            for i, M in enumerate(items):
                if _shape(M) != shape:
                    raise DimensionMismatch(f"{name}[{i}] has shape {_shape(M)}, expected {shape}")

    @property
    def n(self) -> int:
        first = self.phi[0] if isinstance(self.phi, tuple) else self.phi
        return first.shape[0]

    @property
    def m(self) -> int:
        first = self.h[0] if isinstance(self.h, tuple) else self.h
        return first.shape[0]

    @staticmethod
    def _at(sched, k: int, name: str):
        if not isinstance(sched, tuple):
            return sched
        if k < 0 or k >= len(sched):
            raise ScheduleError(f"{name} schedule has {len(sched)} entries, step {k} requested")
        return sched[k]

    def phi_at(self, k: int) -> np.ndarray:
        return self._at(self.phi, k, "phi")

    def h_at(self, k: int) -> np.ndarray:
        return self._at(self.h, k, "h")

    def q_at(self, k: int) -> SpdMatrix:
        return self._at(self.q, k, "q")

    def r_at(self, k: int) -> SpdMatrix:
        return self._at(self.r, k, "r")

    def at(self, k: int) -> tuple[np.ndarray, np.ndarray, SpdMatrix, SpdMatrix]:
        return self.phi_at(k), self.h_at(k), self.q_at(k), self.r_at(k)

    def check_horizon(self, horizon: int, filtering: bool = False) -> None:
        """Per-step schedules must cover the steps a run touches."""
        need_dyn = horizon + 1 if filtering else horizon
        for name, sched, need in (("phi", self.phi, need_dyn), ("q", self.q, need_dyn),
                                  ("h", self.h, horizon + 1), ("r", self.r, horizon + 1)):
            if isinstance(sched, tuple) and len(sched) < need:
                raise ScheduleError(f"{name} schedule has {len(sched)} entries, horizon {horizon} needs {need}")

    def to_dict(self) -> dict:
        def enc(s):
            if isinstance(s, tuple):
                return [np.asarray(M).tolist() for M in s]
            return np.asarray(s).tolist()
        return {"phi": enc(self.phi), "h": enc(self.h), "q": enc(self.q), "r": enc(self.r)}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray        # (K+1, n)
    measurements: np.ndarray  # (K+1, m)
    seed: int


@dataclass(frozen=True)
class JointMoments:
    """Central second moments of ``(x_K, z_0..z_K)`` plus their means.

    ``cov_x_Z`` is ``n x m(K+1)`` with blocks ``Cov(x_K, z_j)``; ``cov_ZZ``
    has blocks ``Cov(z_i, z_j)``; ``cov_xx = Cov(x_K)``.
    """

    cov_x_Z: np.ndarray
    cov_ZZ: SpdMatrix
    cov_xx: np.ndarray
    mean_x: np.ndarray
    mean_Z: np.ndarray


def derive_seed(master_seed: int, run_index: int) -> int:
    """Independent 64-bit seed for run ``run_index`` of a Monte-Carlo batch."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(run_index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _substreams(seed: int) -> tuple[np.random.Generator, ...]:
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.Generator(np.random.Philox(c)) for c in children)


def _draws(model: StateSpaceModel, horizon: int, seed: int):
    gx, gu, gw = _substreams(seed)
    return (gx.standard_normal(model.n),
            gu.standard_normal((horizon, model.n)),
            gw.standard_normal((horizon + 1, model.m)))


def _rows_times(X: np.ndarray, A: np.ndarray) -> np.ndarray:
    """``X @ A.T`` accumulated column by column in a fixed order.

    BLAS picks different kernels (and summation orders) depending on the
    number of rows and threads; this keeps every sample bit-identical
    whether it is drawn alone or inside an ensemble.
    """
    out = np.zeros((X.shape[0], A.shape[0]))
    for j in range(A.shape[1]):
        out += X[:, j:j + 1] * A[:, j]
    return out


def _propagate(model, x0_mean, L0, horizon, ex, eu, ew):
    # ex: (N, n), eu: (N, K, n), ew: (N, K+1, m); rows are runs.
    N = ex.shape[0]
    X = np.empty((N, horizon + 1, model.n))
    Z = np.empty((N, horizon + 1, model.m))
    X[:, 0] = x0_mean + _rows_times(ex, L0)
    for k in range(horizon + 1):
        Z[:, k] = _rows_times(X[:, k], model.h_at(k)) + _rows_times(ew[:, k], model.r_at(k).factor)
        if k < horizon:
            X[:, k + 1] = _rows_times(X[:, k], model.phi_at(k)) + _rows_times(eu[:, k], model.q_at(k).factor)
    return X, Z


def _validate(model, x0_mean, P0, horizon):
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    model.check_horizon(horizon)
    x0_mean = as_vector(x0_mean, "x0_mean")
    P0 = spd_check(P0, psd=True)
    if x0_mean.shape[0] != model.n or P0.n != model.n:
        raise DimensionMismatch("x0_mean / P0 do not match the state dimension")
    return x0_mean, P0


def sample_trajectory(model: StateSpaceModel, x0_mean, P0, horizon: int, seed: int) -> Trajectory:
    """One realisation ``x_0..x_K``, ``z_0..z_K``; bit-reproducible from ``seed``."""
    x0_mean, P0 = _validate(model, x0_mean, P0, horizon)
    ex, eu, ew = _draws(model, horizon, seed)
    X, Z = _propagate(model, x0_mean, P0.factor, horizon, ex[None], eu[None], ew[None])
    return Trajectory(states=X[0], measurements=Z[0], seed=int(seed))


def sample_ensemble(model: StateSpaceModel, x0_mean, P0, horizon: int, master_seed: int,
                    runs: int) -> tuple[np.ndarray, np.ndarray, list[int]]:
    """``runs`` trajectories, run ``i`` seeded by ``derive_seed(master_seed, i)``.

    Returns states ``(runs, K+1, n)``, measurements ``(runs, K+1, m)`` and the seeds.
    """
    x0_mean, P0 = _validate(model, x0_mean, P0, horizon)
    seeds = [derive_seed(master_seed, i) for i in range(runs)]
    ex = np.empty((runs, model.n))
    eu = np.empty((runs, horizon, model.n))
    ew = np.empty((runs, horizon + 1, model.m))
    for i, s in enumerate(seeds):
        ex[i], eu[i], ew[i] = _draws(model, horizon, s)
    X, Z = _propagate(model, x0_mean, P0.factor, horizon, ex, eu, ew)
    return X, Z, seeds


def propagate_moments(model: StateSpaceModel, x0_mean, P0, horizon: int) -> JointMoments:
    """Exact means and covariances of ``(x_K, z_0..z_K)``; no sampling."""
    x0_mean, P0 = _validate(model, x0_mean, P0, horizon)
    n, m, K = model.n, model.m, horizon
    if m * (K + 1) > MAX_STACKED_DIM:
        raise DimensionMismatch(f"stacked measurement dimension {m * (K + 1)} exceeds {MAX_STACKED_DIM}")
    means = [x0_mean]
    covs = [P0.matrix]
    for k in range(K):
        F = model.phi_at(k)
        means.append(F @ means[-1])
        covs.append(symmetrize(F @ covs[-1] @ F.T + model.q_at(k).matrix))
    # cross[i][j] = Cov(x_i, x_j) for i >= j
    ZZ = np.zeros((m * (K + 1), m * (K + 1)))
    xZ = np.zeros((n, m * (K + 1)))
    for j in range(K + 1):
        Hj = model.h_at(j)
        C = covs[j]
        for i in range(j, K + 1):
            if i > j:
                C = model.phi_at(i - 1) @ C
            block = model.h_at(i) @ C @ Hj.T
            if i == j:
                block = block + model.r_at(i).matrix
            ZZ[i * m:(i + 1) * m, j * m:(j + 1) * m] = block
            ZZ[j * m:(j + 1) * m, i * m:(i + 1) * m] = block.T
        xZ[:, j * m:(j + 1) * m] = C @ Hj.T
    mean_Z = np.concatenate([model.h_at(k) @ means[k] for k in range(K + 1)])
    return JointMoments(cov_x_Z=xZ, cov_ZZ=spd_check(symmetrize(ZZ)), cov_xx=covs[K],
                        mean_x=means[K], mean_Z=mean_Z)


def batch_oracle_estimate(moments: JointMoments, Z) -> tuple[np.ndarray, np.ndarray]:
    """Non-recursive minimum-variance estimate of ``x_K`` from all measurements at once."""
    Z = np.asarray(Z, dtype=np.float64).reshape(-1)
    if Z.shape[0] != moments.cov_ZZ.n:
        raise DimensionMismatch(f"stacked measurements have length {Z.shape[0]}, moments expect {moments.cov_ZZ.n}")
    est = min_variance_estimate(SecondMoments(moments.cov_x_Z, moments.cov_ZZ),
                                Z - moments.mean_Z, moments.cov_xx)
    return moments.mean_x + est.beta_hat, est.error_cov.matrix


def model_from_arrays(phi, h, q, r) -> StateSpaceModel:
    return StateSpaceModel(phi=phi, h=h, q=q, r=r)


def constant_velocity_model(dt: float = 1.0, q: float = 0.1, r: float = 1.0) -> StateSpaceModel:
    """1-D position/velocity target with white-acceleration process noise, position measured."""
    phi = np.array([[1.0, dt], [0.0, 1.0]])
    Q = q * np.array([[dt ** 3 / 3, dt ** 2 / 2], [dt ** 2 / 2, dt]])
    return StateSpaceModel(phi=phi, h=np.array([[1.0, 0.0]]), q=Q, r=np.array([[r]]))


def stack(measurements: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([np.atleast_1d(z) for z in measurements])
