import numpy as np
import pytest
from hypothesis import strategies as st

from kalmanest.random_instances import random_batch, random_model_arrays


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


seeds = st.integers(min_value=0, max_value=2 ** 32 - 1)


def batch_from_seed(seed, **kw):
    return random_batch(np.random.default_rng(seed), **kw)


def model_arrays_from_seed(seed, **kw):
    return random_model_arrays(np.random.default_rng(seed), **kw)


def _band_ratio(samples_fn, rng, N, chunk=50_000):
    """Max over entries of |sample mean| / (4 * sample std / sqrt(N))."""
    s1 = s2 = None
    done = 0
    while done < N:
        c = min(chunk, N - done)
        prods = samples_fn(rng, c)
        a, b = prods.sum(axis=0), (prods ** 2).sum(axis=0)
        s1, s2 = (a, b) if s1 is None else (s1 + a, s2 + b)
        done += c
    mean = s1 / N
    std = np.sqrt(np.maximum(s2 / N - mean ** 2, 0.0) * N / (N - 1))
    return float(np.max(np.abs(mean) / (4.0 * std / np.sqrt(N))))


def _gaussian(rng, cov, count):
    return rng.standard_normal((count, cov.shape[0])) @ np.linalg.cholesky(cov).T


def orthogonality_ratios(d, rng, N):
    """Band ratios for ``E[(beta - beta_hat) y^T]`` and ``E[beta_hat (y2 - W2 beta_hat)^T]``.

    ``d`` is a random batch; the second quantity uses ``d`` as the first
    block and a fresh design/noise pair as the new measurement block.
    Ratios <= 1 mean every entry lies inside its 4-sigma band.
    """
    from kalmanest.batch_estimators import BatchProblem, min_variance_prior_gain
    from kalmanest.random_instances import random_design, random_spd

    W, Q, R = d["W"], d["Q"], d["R"]
    K = min_variance_prior_gain(BatchProblem(W=W, Q=Q, y=np.zeros(W.shape[0]), prior_R=R)).gain
    m2 = int(rng.integers(1, 5))
    W2, Q2 = random_design(rng, m2, W.shape[1]), random_spd(rng, m2)

    def first(g, c):
        beta = _gaussian(g, R, c)
        y = beta @ W.T + _gaussian(g, Q, c)
        err = beta - y @ K.T
        return np.einsum("ni,nj->nij", err, y)

    def second(g, c):
        beta = _gaussian(g, R, c)
        bh = (beta @ W.T + _gaussian(g, Q, c)) @ K.T
        y2 = beta @ W2.T + _gaussian(g, Q2, c)
        return np.einsum("ni,nj->nij", bh, y2 - bh @ W2.T)

    return _band_ratio(first, rng, N), _band_ratio(second, rng, N)
