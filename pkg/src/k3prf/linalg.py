"""Guarded solves for the small symmetric systems used by the estimators."""

from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as la

from .errors import IllConditionedError

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
RIDGE = 1e-10


def sym_solve(A, b, name="matrix", cond_limit=COND_LIMIT, ridge=RIDGE):
    """Solve ``A x = b`` for symmetric PSD ``A``.

    Falls back to ``A + ridge * trace(A)/L * I`` when the condition number
    exceeds ``cond_limit``; raises IllConditionedError when even that is
    numerically singular.
    """
    A = np.asarray(A, dtype=float)
    A = 0.5 * (A + A.T)
    L = A.shape[0]
    w = np.linalg.eigvalsh(A)
    top = abs(w[-1])
    if not np.isfinite(w).all() or top == 0.0:
        raise IllConditionedError(f"{name} is zero or non-finite", matrix=name)
    cond = top / w[0] if w[0] > 0 else np.inf
    if cond > cond_limit:
        jitter = ridge * np.trace(A) / L
        if jitter <= 0:
            raise IllConditionedError(f"{name} is singular (trace {np.trace(A):.3e})", matrix=name)
        A = A + jitter * np.eye(L)
        w2 = np.linalg.eigvalsh(A)
        if w2[0] <= 0 or w2[-1] / w2[0] > 1.0 / np.finfo(float).eps:
            raise IllConditionedError(
                f"{name} is singular beyond ridge tolerance (cond {cond:.3e})", matrix=name
            )
        log.info("ridge jitter %.3e applied to %s (cond %.3e)", jitter, name, cond)
    try:
        return la.solve(A, b, assume_a="sym")
    except la.LinAlgError as exc:
        raise IllConditionedError(f"{name}: {exc}", matrix=name) from exc


def ols(X, y, intercept=True, name="regression"):
    """Least squares coefficients via pivoted QR; raises on rank deficiency."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    if X.shape[0] < X.shape[1]:
        raise IllConditionedError(
            f"{name}: {X.shape[0]} observations for {X.shape[1]} coefficients", matrix=name
        )
    Q, R, piv = la.qr(X, mode="economic", pivoting=True)
    d = np.abs(np.diag(R))
    if d.size == 0 or d[-1] <= max(X.shape) * np.finfo(float).eps * d[0]:
        raise IllConditionedError(f"{name}: design matrix is rank deficient", matrix=name)
    coef = np.empty((X.shape[1],) + np.shape(y)[1:])
    coef[piv] = la.solve_triangular(R, Q.T @ y)
    return coef
