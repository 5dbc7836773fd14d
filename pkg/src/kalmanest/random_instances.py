"""Random well-conditioned instances for property checks and the verify suite."""

from __future__ import annotations

import numpy as np


def random_spd(rng: np.random.Generator, n: int) -> np.ndarray:
    """``A A^T + n I`` rescaled to unit mean diagonal; condition number stays modest."""
    A = rng.uniform(-1.0, 1.0, size=(n, n))
    S = A @ A.T + n * np.eye(n)
    S /= np.trace(S) / n
    return 0.5 * (S + S.T)


def random_psd(rng: np.random.Generator, n: int, rank: int | None = None) -> np.ndarray:
    rank = n if rank is None else rank
    A = rng.uniform(-1.0, 1.0, size=(n, rank))
    S = A @ A.T
    return 0.5 * (S + S.T)


def random_design(rng: np.random.Generator, m: int, n: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(m, n))


def conditioned_design(rng: np.random.Generator, m: int, n: int,
                       sv_range: tuple[float, float] = (0.5, 2.0)) -> np.ndarray:
    """Full-column-rank ``m x n`` design (``m >= n``) with bounded singular values."""
    U, _ = np.linalg.qr(rng.standard_normal((m, n)))
    V, _ = np.linalg.qr(rng.standard_normal((n, n)))
    return (U * rng.uniform(*sv_range, size=n)) @ V.T


def random_transition(rng: np.random.Generator, n: int) -> np.ndarray:
    """Transition matrix with spectral norm in [0.5, 1.05] so long horizons stay bounded."""
    A = rng.uniform(-1.0, 1.0, size=(n, n))
    return A * (rng.uniform(0.5, 1.05) / np.linalg.norm(A, 2))


def random_batch(rng: np.random.Generator, n_max: int = 8, m_max: int = 8,
                 full_rank: bool = False) -> dict:
    """Problem ``y = W beta + eps`` with SPD noise and prior covariances.

    ``full_rank`` forces ``m >= n`` (needed when no prior is supplied) and
    draws ``W`` with singular values in ``[0.5, 2]``.
    """
    n = int(rng.integers(1, n_max + 1))
    m_lo = n if full_rank else 1
    m = int(rng.integers(m_lo, max(m_lo, m_max) + 1))
    W = conditioned_design(rng, m, n) if full_rank else random_design(rng, m, n)
    Q = random_spd(rng, m)
    R = random_spd(rng, n)
    y = rng.standard_normal(m)
    return {"W": W, "Q": Q, "R": R, "y": y}


def random_model_arrays(rng: np.random.Generator, n_max: int = 6, m_max: int = 6) -> dict:
    n = int(rng.integers(1, n_max + 1))
    m = int(rng.integers(1, m_max + 1))
    return {
        "phi": random_transition(rng, n),
        "h": random_design(rng, m, n),
        "q": random_spd(rng, n),
        "r": random_spd(rng, m),
        "x0_mean": rng.standard_normal(n),
        "p0": random_spd(rng, n),
    }
