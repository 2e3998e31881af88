"""Closed-form kernel three-pass regression filter.

With ``Zc = J Z`` and ``Kc = J K J`` the fit stores

    W = Zc' Zc,   A = Zc' Kc Zc,   B = Zc' Kc Kc Zc,   v = Zc' Kc y

and the estimated factors, coefficients and fitted values are

    F_hat = K Zc A^-1 W            (one-sided centering on K)
    beta  = W^-1 A B^-1 v
    y_hat = ybar + Kc Zc B^-1 v    (= ybar + J F_hat beta)

The linear three-pass filter is the ``linear`` kernel special case.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import IllConditionedError, InvalidInputError
from .kernels import KernelSpec, center_cross_gram, center_gram, cross_gram, gram
from .linalg import ols, sym_solve

PROXY_RANK_TOL = 1e-10


@dataclass(frozen=True)
class ProxySet:
    Z: np.ndarray
    provenance: str = "theory"
    names: tuple = ()

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        object.__setattr__(self, "Z", Z)
        if Z.shape[1] < 1:
            raise InvalidInputError("need at least one proxy")

    @property
    def L(self) -> int:
        return self.Z.shape[1]

    @classmethod
    def theory(cls, Z, names=()):
        return cls(Z, "theory", tuple(names))

    @classmethod
    def auto(cls, Z):
        return cls(Z, "auto")


def _as_proxies(Z) -> ProxySet:
    return Z if isinstance(Z, ProxySet) else ProxySet(Z)


def check_proxy_rank(Zc: np.ndarray, tol: float = PROXY_RANK_TOL) -> None:
    s = np.linalg.svd(Zc, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= tol * s[0]:
        raise IllConditionedError(
            "demeaned proxies are collinear or constant "
            f"(singular values {s[-1]:.3e} / {s[0]:.3e})",
            matrix="Z'J Z",
        )


@dataclass(frozen=True, eq=False)
class K3prfFit:
    spec: KernelSpec
    X_train: np.ndarray
    K: np.ndarray
    Kc: np.ndarray
    Z: np.ndarray
    W: np.ndarray
    A: np.ndarray
    B: np.ndarray
    beta_hat: np.ndarray
    F_hat: np.ndarray
    y_bar: float
    f_bar: np.ndarray
    fitted: np.ndarray = field(repr=False)
    # B^-1 v, shared by the closed-form fitted and predicted values
    _dual: np.ndarray = field(repr=False, default=None)

    @property
    def T(self) -> int:
        return self.K.shape[0]

    @property
    def L(self) -> int:
        return self.Z.shape[1]

    @property
    def Zc(self) -> np.ndarray:
        return self.Z - self.Z.mean(axis=0)


def fit(X, y, Z, spec: Optional[KernelSpec] = None) -> K3prfFit:
    """Fit the kernel 3PRF on predictors ``X`` (T x N), target ``y`` and proxies ``Z``."""
    spec = spec or KernelSpec.linear()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    Z = _as_proxies(Z).Z
    T = X.shape[0]
    if y.shape[0] != T or Z.shape[0] != T:
        raise InvalidInputError(f"length mismatch: X has {T} rows, y {y.shape[0]}, Z {Z.shape[0]}")
    if T <= Z.shape[1]:
        raise InvalidInputError(f"need T > L, got T={T}, L={Z.shape[1]}")
    if not (np.isfinite(X).all() and np.isfinite(y).all() and np.isfinite(Z).all()):
        raise InvalidInputError("non-finite values in X, y or Z")

    K = gram(spec, X).values
    Kc = center_gram(K).values
    Zc = Z - Z.mean(axis=0)
    check_proxy_rank(Zc)

    W = Zc.T @ Zc
    KcZ = Kc @ Zc
    A = Zc.T @ KcZ
    A = 0.5 * (A + A.T)
    B = KcZ.T @ KcZ
    v = KcZ.T @ y

    dual = sym_solve(B, v, name="B = Z'J K J K J Z")
    A_inv_W = sym_solve(A, W, name="A = Z'J K J Z")
    beta_hat = sym_solve(W, A @ dual, name="W = Z'J Z")
    F_hat = K @ Zc @ A_inv_W
    y_bar = float(y.mean())
    fitted = y_bar + KcZ @ dual

    return K3prfFit(
        spec=spec,
        X_train=X.copy(),
        K=K,
        Kc=Kc,
        Z=Z.copy(),
        W=W,
        A=A,
        B=B,
        beta_hat=beta_hat,
        F_hat=F_hat,
        y_bar=y_bar,
        f_bar=F_hat.mean(axis=0),
        fitted=fitted,
        _dual=dual,
    )


def fitted_values(f: K3prfFit, path: str = "closed") -> np.ndarray:
    """In-sample fitted values.

    ``path="closed"`` uses the single-sandwich formula, ``path="factors"``
    goes through ``ybar + J F_hat beta_hat``.
    """
    if path == "closed":
        return f.y_bar + f.Kc @ f.Zc @ f._dual
    if path == "factors":
        Fb = f.F_hat @ f.beta_hat
        return f.y_bar + Fb - Fb.mean()
    raise InvalidInputError(f"unknown path {path!r}")


def factors_new(f: K3prfFit, X_new) -> np.ndarray:
    """Estimated factors for new rows (pass 2 applied out of sample)."""
    kappa = cross_gram(f.spec, f.X_train, X_new)
    return kappa @ f.Zc @ sym_solve(f.A, f.W, name="A = Z'J K J Z")


def predict(f: K3prfFit, X_new) -> np.ndarray:
    X_new = np.asarray(X_new, dtype=float)
    if X_new.ndim == 1:
        X_new = X_new[None, :]
    if X_new.shape[1] != f.X_train.shape[1]:
        raise InvalidInputError(
            f"X_new has {X_new.shape[1]} columns, fit was trained on {f.X_train.shape[1]}"
        )
    kappa = cross_gram(f.spec, f.X_train, X_new)
    return f.y_bar + center_cross_gram(kappa, f.K) @ f.Zc @ f._dual


def in_sample_r2(y, y_hat) -> float:
    y = np.asarray(y, dtype=float)
    r = y - y_hat
    return float(1.0 - r @ r / ((y - y.mean()) @ (y - y.mean())))


@dataclass(frozen=True)
class ExplicitPasses:
    loadings: np.ndarray  # M x L pass-1 slopes
    F_hat: np.ndarray  # T x L pass-2 slopes
    beta0: float
    beta_hat: np.ndarray
    fitted: np.ndarray

    def predict(self, Phi_new) -> np.ndarray:
        Phi_new = np.atleast_2d(np.asarray(Phi_new, dtype=float))
        F_new = ols(self.loadings, Phi_new.T, intercept=False, name="pass 2").T
        return self.beta0 + F_new @ self.beta_hat


def fit_explicit_passes(Phi_X, y, Z) -> ExplicitPasses:
    """Run the three regression passes literally on explicit features.

    Pass 1 regresses every feature column on the proxies with an intercept,
    pass 2 regresses every cross section on the pass-1 slopes without an
    intercept, pass 3 regresses the target on the pass-2 factors.
    """
    Phi_X = np.asarray(Phi_X, dtype=float)
    if Phi_X.ndim == 1:
        Phi_X = Phi_X[:, None]
    y = np.asarray(y, dtype=float).ravel()
    Z = _as_proxies(Z).Z
    coef1 = ols(Z, Phi_X, intercept=True, name="pass 1")
    loadings = coef1[1:].T
    F_hat = ols(loadings, Phi_X.T, intercept=False, name="pass 2").T
    coef3 = ols(F_hat, y, intercept=True, name="pass 3")
    fitted = coef3[0] + F_hat @ coef3[1:]
    return ExplicitPasses(loadings, F_hat, float(coef3[0]), coef3[1:], fitted)
