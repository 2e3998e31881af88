"""Kernel functions, Gram matrices and temporal centering.

Centering is always done through the mean-subtraction identity
``K - rowmean - colmean + grandmean`` so the T x T demeaning matrix is
never formed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import InvalidInputError

PSD_TOL = 1e-8

FAMILIES = ("linear", "polynomial", "gaussian")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus its hyperparameters.

    ``degree``/``offset`` are used by the polynomial family only and
    ``sigma`` by the Gaussian family only.
    """

    family: str = "linear"
    degree: int = 2
    offset: float = 1.0
    sigma: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown kernel family {self.family!r}")
        if self.family == "gaussian":
            if self.sigma is None or not np.isfinite(self.sigma) or self.sigma <= 0:
                raise InvalidInputError(f"gaussian kernel needs sigma > 0, got {self.sigma}")
        if self.family == "polynomial":
            if int(self.degree) != self.degree or self.degree < 1:
                raise InvalidInputError(f"polynomial degree must be a positive integer, got {self.degree}")
            if self.offset < 0:
                raise InvalidInputError(f"polynomial offset must be >= 0, got {self.offset}")

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    @classmethod
    def poly2(cls, offset: float = 1.0) -> "KernelSpec":
        return cls("polynomial", degree=2, offset=offset)

    @classmethod
    def gaussian(cls, sigma: float) -> "KernelSpec":
        return cls("gaussian", sigma=float(sigma))

    def with_sigma(self, sigma: float) -> "KernelSpec":
        return KernelSpec(self.family, self.degree, self.offset, float(sigma))

    def to_dict(self) -> dict:
        d = {"family": self.family}
        if self.family == "polynomial":
            d.update(degree=int(self.degree), offset=float(self.offset))
        elif self.family == "gaussian":
            d["sigma"] = float(self.sigma)
        return d


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    centered: bool = False

    @property
    def T(self) -> int:
        return self.values.shape[0]


def _as_2d(X, name="X") -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidInputError(f"{name} must be a 2-d array, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise InvalidInputError(f"{name} contains non-finite values")
    return X


def _sq_dists(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # expanded form, clamped at zero against round-off
    d = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(d, 0.0, out=d)
    return d


def _kernel_block(spec: KernelSpec, A: np.ndarray, B: np.ndarray) -> np.ndarray:
    if spec.family == "linear":
        return A @ B.T
    if spec.family == "polynomial":
        return (A @ B.T + spec.offset) ** int(spec.degree)
    return np.exp(-_sq_dists(A, B) / (2.0 * spec.sigma**2))


def eval_kernel(spec: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise InvalidInputError(f"dimension mismatch: {x.size} vs {y.size}")
    if spec.family == "linear":
        return float(x @ y)
    if spec.family == "polynomial":
        return float((x @ y + spec.offset) ** int(spec.degree))
    d = x - y
    return float(np.exp(-(d @ d) / (2.0 * spec.sigma**2)))


def gram(spec: KernelSpec, X) -> GramMatrix:
    X = _as_2d(X)
    if X.shape[0] < 2:
        raise InvalidInputError("gram needs at least two rows")
    K = _kernel_block(spec, X, X)
    # exact symmetry; the expanded-distance form can differ in the last ulp
    K = 0.5 * (K + K.T)
    if spec.family == "gaussian":
        np.fill_diagonal(K, 1.0)
    return GramMatrix(K, centered=False)


def check_psd(K, tol: float = PSD_TOL) -> float:
    """Return the smallest eigenvalue, raising if it is below ``-tol * ||K||``."""
    K = np.asarray(getattr(K, "values", K))
    w = np.linalg.eigvalsh(K)
    scale = max(abs(w[0]), abs(w[-1]))
    if w[0] < -tol * scale:
        raise InvalidInputError(f"Gram matrix not PSD: min eigenvalue {w[0]:.3e}, norm {scale:.3e}")
    return float(w[0])


def cross_gram(spec: KernelSpec, X_train, X_new) -> np.ndarray:
    """Kernel evaluations between new rows and training rows, shape (T_new, T)."""
    X_train = _as_2d(X_train, "X_train")
    X_new = _as_2d(X_new, "X_new")
    if X_train.shape[1] != X_new.shape[1]:
        raise InvalidInputError(
            f"column mismatch: training has {X_train.shape[1]}, new has {X_new.shape[1]}"
        )
    return _kernel_block(spec, X_new, X_train)


def center_gram(K) -> GramMatrix:
    if isinstance(K, GramMatrix):
        if K.centered:
            return K
        K = K.values
    K = np.asarray(K, dtype=float)
    col = K.mean(axis=0)
    row = K.mean(axis=1)
    Kc = K - row[:, None] - col[None, :] + K.mean()
    return GramMatrix(0.5 * (Kc + Kc.T), centered=True)


def center_cross_gram(kappa, K) -> np.ndarray:
    """Center a cross-Gram consistently with the training Gram ``K``.

    Equals ``(phi(X_new) - mean_train phi) (phi(X_train) - mean_train phi)'``
    for an explicit feature map.
    """
    if isinstance(K, GramMatrix):
        if K.centered:
            raise InvalidInputError("center_cross_gram needs the uncentered training Gram")
        K = K.values
    kappa = np.atleast_2d(np.asarray(kappa, dtype=float))
    K = np.asarray(K, dtype=float)
    if kappa.shape[1] != K.shape[0]:
        raise InvalidInputError(f"cross-Gram has {kappa.shape[1]} columns, training Gram is {K.shape[0]}")
    col = K.mean(axis=0)
    out = kappa - col[None, :]
    return out - out.mean(axis=1, keepdims=True)


def explicit_poly2_features(X, offset: float = 1.0) -> np.ndarray:
    """Explicit feature map whose dot products equal ``(x.y + offset)**2``.

    Columns: constant ``offset`` (dropped when offset is zero), linear terms
    ``sqrt(2*offset) x_i`` (likewise), squares ``x_i**2`` and cross terms
    ``sqrt(2) x_i x_j`` for ``i < j``.
    """
    X = _as_2d(X)
    T, N = X.shape
    iu, ju = np.triu_indices(N, k=1)
    parts = []
    if offset > 0:
        parts.append(np.full((T, 1), float(offset)))
        parts.append(np.sqrt(2.0 * offset) * X)
    parts.append(X**2)
    parts.append(np.sqrt(2.0) * X[:, iu] * X[:, ju])
    return np.hstack(parts)
