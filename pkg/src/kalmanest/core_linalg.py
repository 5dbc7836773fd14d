"""Small dense-matrix layer: SPD certification, factor solves, log-determinants.

Every inverse that appears in the estimators is realised as a Cholesky
solve against a certified :class:`SpdMatrix`; explicit inverses are left
to the test-suite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

SYM_TOL = 1e-8
SOLVE_TOL = 1e-10
PSD_PIVOT_TOL = 1e-10
COND_WARN_RATIO = 1e12


class LinAlgError(ValueError):
    """Base class for every numerical contract violation raised by the package."""


class NotSquare(LinAlgError):
    pass


class AsymmetryExceedsTol(LinAlgError):
    pass


class NotPositiveDefinite(LinAlgError):
    pass


class DimensionMismatch(LinAlgError):
    pass


class NonFiniteEntries(LinAlgError):
    pass


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-D float64 array with at least one row and column."""
    if isinstance(M, SpdMatrix):
        return M.matrix
    A = np.array(M, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] < 1 or A.shape[1] < 1:
        raise DimensionMismatch(f"{name}: expected a non-empty 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise NonFiniteEntries(f"{name}: entries must be finite")
    return A


def as_vector(v, name: str = "vector") -> np.ndarray:
    a = np.array(v, dtype=np.float64)
    if a.ndim == 0:
        a = a.reshape(1)
    if a.ndim != 1:
        raise DimensionMismatch(f"{name}: expected a 1-D vector, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise NonFiniteEntries(f"{name}: entries must be finite")
    return a


@dataclass(frozen=True, eq=False)
class SpdMatrix:
    """A symmetric matrix whose Cholesky factorisation has been checked.

    Only :func:`spd_check` should build these. ``pivots`` are the diagonal
    of D in ``matrix = L D L^T`` (the squared diagonal of ``factor``).
    In semidefinite mode some pivots may be exactly zero.
    """

    matrix: np.ndarray
    factor: np.ndarray
    pivots: np.ndarray
    semidefinite: bool = False
    ill_conditioned: bool = False

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def singular(self) -> bool:
        return bool(np.any(self.pivots == 0.0))

    @property
    def pivot_ratio(self) -> float:
        lo = float(self.pivots.min())
        hi = float(self.pivots.max())
        return np.inf if lo == 0.0 else hi / lo

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def symmetrize(M) -> np.ndarray:
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {A.shape}")
    return 0.5 * (A + A.T)


def _semidefinite_factor(S: np.ndarray, psd_tol: float) -> np.ndarray:
    # Crout Cholesky that zeroes columns whose pivot is below the tolerance.
    n = S.shape[0]
    L = np.zeros_like(S)
    scale = max(float(np.max(np.abs(np.diag(S)))), np.finfo(float).tiny)
    thresh = psd_tol * scale
    for j in range(n):
        d = S[j, j] - L[j, :j] @ L[j, :j]
        if d < -thresh:
            raise NotPositiveDefinite(f"pivot {j} is negative ({d:.3e})")
        if d <= thresh:
            continue
        L[j, j] = np.sqrt(d)
        L[j + 1:, j] = (S[j + 1:, j] - L[j + 1:, :j] @ L[j, :j]) / L[j, j]
    resid = np.max(np.abs(L @ L.T - S))
    if resid > np.sqrt(psd_tol) * scale:
        raise NotPositiveDefinite(f"matrix is not positive semidefinite (residual {resid:.3e})")
    return L


def spd_check(M, tol: float = SYM_TOL, *, psd: bool = False,
              psd_tol: float = PSD_PIVOT_TOL) -> SpdMatrix:
    """Certify ``M`` as symmetric positive definite and cache its factor.

    The returned matrix is the symmetrised ``(M + M^T) / 2``. With
    ``psd=True`` singular (positive semidefinite) matrices are accepted
    when every pivot is at least ``-psd_tol`` relative to the largest
    diagonal entry; such pivots are clamped to zero.
    """
    if isinstance(M, SpdMatrix):
        if psd or not M.semidefinite:
            return M
        if not M.singular:
            return SpdMatrix(M.matrix, M.factor, M.pivots, False, M.ill_conditioned)
        raise NotPositiveDefinite("matrix is singular")
    A = as_matrix(M)
    if A.shape[0] != A.shape[1]:
        raise NotSquare(f"expected a square matrix, got shape {A.shape}")
    amax = float(np.max(np.abs(A)))
    asym = float(np.max(np.abs(A - A.T)))
    if asym > tol * amax:
        raise AsymmetryExceedsTol(f"max |M - M^T| = {asym:.3e} exceeds {tol:g} * max|M|")
    S = 0.5 * (A + A.T)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        if not psd:
            raise NotPositiveDefinite("Cholesky factorisation found a non-positive pivot") from None
        L = _semidefinite_factor(S, psd_tol)
    pivots = np.diag(L) ** 2
    if not psd and np.any(pivots <= 0.0):
        raise NotPositiveDefinite("Cholesky factorisation found a non-positive pivot")
    S.setflags(write=False)
    L.setflags(write=False)
    lo = pivots.min()
    ill = bool(lo == 0.0 or pivots.max() / lo > COND_WARN_RATIO)
    return SpdMatrix(S, L, pivots, semidefinite=bool(psd and np.any(pivots == 0.0)),
                     ill_conditioned=ill)


def solve_spd(A: SpdMatrix, B) -> np.ndarray:
    """Solve ``A X = B`` with the cached Cholesky factor; ``B`` may be a vector."""
    if not isinstance(A, SpdMatrix):
        A = spd_check(A)
    if A.singular:
        raise NotPositiveDefinite("cannot solve with a singular semidefinite matrix")
    B = np.asarray(B, dtype=np.float64)
    if B.ndim not in (1, 2) or B.shape[0] != A.n:
        raise DimensionMismatch(f"cannot solve {A.shape} system with right-hand side {B.shape}")
    return scipy.linalg.cho_solve((A.factor, True), B, check_finite=False)


def inverse_spd(A: SpdMatrix) -> np.ndarray:
    """``A^{-1}`` by factor-solve against the identity; used where the inverse is the output."""
    return symmetrize(solve_spd(A, np.eye(A.n)))


def logdet(A: SpdMatrix) -> float:
    if not isinstance(A, SpdMatrix):
        A = spd_check(A)
    if A.singular:
        raise NotPositiveDefinite("log-determinant of a singular matrix")
    return float(np.sum(np.log(A.pivots)))


def woodbury_posterior_cov(P: SpdMatrix, H, R: SpdMatrix) -> SpdMatrix:
    """``(P^{-1} + H^T R^{-1} H)^{-1}`` evaluated as ``P - P H^T (R + H P H^T)^{-1} H P``."""
    P = spd_check(P, psd=True)
    R = spd_check(R)
    H = as_matrix(H, "H")
    if H.shape != (R.n, P.n):
        raise DimensionMismatch(f"H has shape {H.shape}, expected {(R.n, P.n)}")
    HP = H @ P.matrix
    S = spd_check(symmetrize(HP @ H.T + R.matrix))
    out = P.matrix - HP.T @ solve_spd(S, HP)
    return spd_check(symmetrize(out))


def relative_deviation(a, b, floor: float = 1e-300) -> float:
    """Max-entry deviation of ``a`` from ``b`` relative to the larger max-entry magnitude."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    scale = max(float(np.max(np.abs(a), initial=0.0)), float(np.max(np.abs(b), initial=0.0)), floor)
    return float(np.max(np.abs(a - b), initial=0.0)) / scale


def frobenius_relative(a, b, floor: float = 1e-300) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return float(np.linalg.norm(a - b)) / max(float(np.linalg.norm(b)), floor)
