"""Automatic proxies built recursively from target residuals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List

import numpy as np

from .errors import IllConditionedError, InvalidInputError
from .estimator import K3prfFit, ProxySet, fit
from .kernels import KernelSpec


@dataclass
class AutoProxyTrace:
    proxies: np.ndarray
    residuals: List[np.ndarray] = field(default_factory=list)
    forecasts: List[np.ndarray] = field(default_factory=list)
    last_fit: K3prfFit = None

    @property
    def L(self) -> int:
        return self.proxies.shape[1]

    def proxy_set(self) -> ProxySet:
        return ProxySet.auto(self.proxies)


def build_auto_proxies(X, y, spec: KernelSpec, L: int = 1) -> AutoProxyTrace:
    """Build ``L`` automatic proxies.

    Proxy 1 is the target itself; proxy ``k+1`` is the in-sample residual of
    the fit that uses proxies ``1..k``. The returned trace records every
    residual ``r_0 .. r_{L-1}`` and every intermediate fitted vector.
    """
    y = np.asarray(y, dtype=float).ravel()
    if int(L) != L or L < 1:
        raise InvalidInputError(f"L must be a positive integer, got {L}")
    if y.shape[0] <= L:
        raise InvalidInputError(f"need T > L, got T={y.shape[0]}, L={L}")

    residuals = [y.copy()]
    forecasts = []
    cols = []
    f = None
    for k in range(1, L + 1):
        cols.append(residuals[k - 1])
        Z = np.column_stack(cols)
        try:
            f = fit(X, y, Z, spec)
        except IllConditionedError as exc:
            raise IllConditionedError(
                f"auto-proxy step {k}: residual proxies are numerically collinear ({exc})",
                matrix=exc.matrix,
                step=k,
            ) from exc
        forecasts.append(f.fitted)
        if k < L:
            residuals.append(y - f.fitted)
    return AutoProxyTrace(np.column_stack(cols), residuals, forecasts, f)
