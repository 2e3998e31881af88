"""Competitor forecasts: PC regression, Sq-PC, PC-Sq, kernel PCA, AR and DI.

Every forecaster works on one estimation window holding the unaligned
series ``X`` (T x N, already standardized) and ``y`` (T), and returns the
direct ``h``-step forecast of ``y[T-1+h]`` made at the last window row.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import IllConditionedError, InvalidInputError
from .kernels import KernelSpec, center_cross_gram, center_gram, cross_gram, gram
from .linalg import ols

KPCA_EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class FactorExtract:
    """Principal components with ``F'F / T = I`` scaling."""

    factors: np.ndarray
    eigenvalues: np.ndarray
    k_selected: int
    scaling: str = "F'F/T = I"


@dataclass(frozen=True)
class ArModel:
    p: int
    coefficients: np.ndarray  # intercept first, then lags 1..p


@dataclass(frozen=True)
class BaselineResult:
    forecast: float
    fitted: np.ndarray
    target: np.ndarray
    coef: np.ndarray
    se: np.ndarray

    @property
    def r2(self) -> float:
        r = self.target - self.fitted
        d = self.target - self.target.mean()
        return float(1.0 - r @ r / (d @ d))


def _fix_signs(V: np.ndarray) -> np.ndarray:
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def pca_factors(X, k: int) -> FactorExtract:
    """Top-``k`` principal components from the dual (T x T) problem ``X X' / (T N)``."""
    X = np.asarray(X, dtype=float)
    T, N = X.shape
    if int(k) != k or k < 0:
        raise InvalidInputError(f"k must be a nonnegative integer, got {k}")
    if k > min(T, N):
        raise InvalidInputError(f"k={k} exceeds min(T, N)={min(T, N)}")
    w, V = np.linalg.eigh(X @ X.T / (T * N))
    order = np.argsort(w)[::-1]
    w = np.clip(w[order], 0.0, None)
    V = _fix_signs(V[:, order[:k]])
    return FactorExtract(np.sqrt(T) * V, w, int(k))


def pca_factors_primal(X, k: int) -> np.ndarray:
    """Same factors computed from the N x N matrix ``X' X``; used as a cross-check."""
    X = np.asarray(X, dtype=float)
    T = X.shape[0]
    w, U = np.linalg.eigh(X.T @ X)
    U = U[:, np.argsort(w)[::-1][:k]]
    F = X @ U
    F = F / np.sqrt((F * F).sum(0) / T)
    return _fix_signs(F)


def eigenvalue_ratio_k(eigenvalues, k_max: int) -> int:
    """Number of factors maximizing ``lambda_k / lambda_{k+1}`` over ``1..k_max``.

    Ties go to the smaller ``k``. ``k_max`` is cut back when fewer than
    ``k_max + 1`` eigenvalues are positive.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    if lam.size == 0 or lam[0] <= 0:
        raise InvalidInputError("all eigenvalues are zero")
    n_pos = int((lam > lam[0] * 1e-14).sum())
    k_max = min(int(k_max), n_pos - 1)
    if k_max < 1:
        return 1
    ratios = lam[:k_max] / lam[1 : k_max + 1]
    return int(np.argmax(ratios)) + 1


def default_k_max(T: int) -> int:
    return max(1, min(8, T // 10))


def _direct(regressors: np.ndarray, y: np.ndarray, h: int, start: int = 0) -> BaselineResult:
    """OLS of ``y[t+h]`` on ``(1, regressors[t])`` for ``t = start .. T-1-h``."""
    T = y.shape[0]
    if h < 1:
        raise InvalidInputError(f"horizon must be >= 1, got {h}")
    if regressors.ndim == 1:
        regressors = regressors[:, None]
    rows = np.arange(start, T - h)
    if rows.size <= regressors.shape[1] + 1:
        raise InvalidInputError(
            f"insufficient observations: {rows.size} aligned rows for {regressors.shape[1] + 1} coefficients"
        )
    D = np.column_stack([np.ones(rows.size), regressors[rows]])
    target = y[rows + h]
    coef = ols(D, target, intercept=False, name="forecast regression")
    fitted = D @ coef
    resid = target - fitted
    dof = max(rows.size - D.shape[1], 1)
    s2 = resid @ resid / dof
    cov = s2 * np.linalg.pinv(D.T @ D)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    x_last = np.concatenate([[1.0], regressors[T - 1]])
    return BaselineResult(float(x_last @ coef), fitted, target, coef, se)


def _check_k(k):
    if int(k) != k or k < 1:
        raise InvalidInputError(f"number of factors must be >= 1, got {k}")


def pc_regression_forecast(X, y, h: int, k: int) -> BaselineResult:
    _check_k(k)
    F = pca_factors(X, k).factors
    return _direct(F, np.asarray(y, dtype=float), h)


def pc_sq_forecast(X, y, h: int, k: int) -> BaselineResult:
    """Regress on the principal components and their squares."""
    _check_k(k)
    F = pca_factors(X, k).factors
    return _direct(np.column_stack([F, F**2]), np.asarray(y, dtype=float), h)


def squared_panel(X) -> np.ndarray:
    """``[X, X*X]`` with every column standardized; constant columns are dropped."""
    X = np.asarray(X, dtype=float)
    aug = np.column_stack([X, X * X])
    sd = aug.std(axis=0)
    keep = sd > 1e-12
    aug = aug[:, keep]
    return (aug - aug.mean(axis=0)) / sd[keep]


def sq_pc_forecast(X, y, h: int, k: int) -> BaselineResult:
    """Principal components of the squared-augmented panel."""
    _check_k(k)
    F = pca_factors(squared_panel(X), k).factors
    return _direct(F, np.asarray(y, dtype=float), h)


@dataclass(frozen=True)
class KernelPCA:
    spec: KernelSpec
    X_train: np.ndarray
    K: np.ndarray
    alphas: np.ndarray  # eigenvectors / sqrt(eigenvalue)
    eigenvalues: np.ndarray

    def transform(self, X_new) -> np.ndarray:
        kappa = cross_gram(self.spec, self.X_train, X_new)
        return center_cross_gram(kappa, self.K) @ self.alphas

    @property
    def factors(self) -> np.ndarray:
        return center_gram(self.K).values @ self.alphas


def kpca_fit(X, spec: KernelSpec, k: int) -> KernelPCA:
    _check_k(k)
    X = np.asarray(X, dtype=float)
    K = gram(spec, X).values
    w, V = np.linalg.eigh(center_gram(K).values)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    if w[0] <= 0:
        raise IllConditionedError("centered Gram has no positive eigenvalue", matrix="kPCA Gram")
    keep = np.flatnonzero(w[:k] > KPCA_EIG_FLOOR * w[0])
    V = _fix_signs(V[:, keep])
    return KernelPCA(spec, X, K, V / np.sqrt(w[keep]), w[keep])


def kpca_regression_forecast(X, y, h: int, spec: KernelSpec, k: int) -> BaselineResult:
    kp = kpca_fit(X, spec, k)
    return _direct(kp.factors, np.asarray(y, dtype=float), h)


def _lag_matrix(y: np.ndarray, p: int) -> np.ndarray:
    # row t holds (y_t, y_{t-1}, ..., y_{t-p+1}); rows t < p-1 are padded with nan
    T = y.shape[0]
    out = np.full((T, p), np.nan)
    for j in range(p):
        out[j:, j] = y[: T - j]
    return out


def di_forecast(y, X, p: int, k: int, h: int, factors: Optional[np.ndarray] = None) -> BaselineResult:
    """Diffusion index: ``p`` own lags plus ``k`` principal components dated ``t``.

    ``k=0`` is the AR(p) forecast and ``p=0`` is PC regression.
    """
    y = np.asarray(y, dtype=float)
    if p < 0 or k < 0 or (p == 0 and k == 0):
        raise InvalidInputError(f"need p >= 0, k >= 0 and p + k >= 1, got p={p}, k={k}")
    T = y.shape[0]
    if T <= p + h + 1:
        raise InvalidInputError(f"insufficient observations: T={T}, p={p}, h={h}")
    blocks = []
    if p > 0:
        blocks.append(_lag_matrix(y, p))
    if k > 0:
        if factors is None:
            factors = pca_factors(X, k).factors
        blocks.append(np.asarray(factors)[:, :k])
    return _direct(np.column_stack(blocks), y, h, start=max(p - 1, 0))


def ar_forecast(y, p: int, h: int) -> BaselineResult:
    if p < 1:
        raise InvalidInputError(f"AR lag order must be >= 1, got {p}")
    return di_forecast(y, None, p, 0, h)


def ar_model(y, p: int, h: int = 1) -> ArModel:
    return ArModel(int(p), ar_forecast(y, p, h).coef)
