"""Kernel three-pass regression filter forecasting toolkit."""

__version__ = "0.1.0"

from .autoproxy import AutoProxyTrace, build_auto_proxies
from .errors import ConfigError, DataError, IllConditionedError, InvalidInputError, K3prfError
from .estimator import K3prfFit, ProxySet, fit, fit_explicit_passes, fitted_values, predict
from .kernels import (
    GramMatrix,
    KernelSpec,
    center_cross_gram,
    center_gram,
    cross_gram,
    eval_kernel,
    explicit_poly2_features,
    gram,
)
from .metrics import oos_r2

__all__ = [
    "AutoProxyTrace",
    "ConfigError",
    "DataError",
    "GramMatrix",
    "IllConditionedError",
    "InvalidInputError",
    "K3prfError",
    "K3prfFit",
    "KernelSpec",
    "ProxySet",
    "build_auto_proxies",
    "center_cross_gram",
    "center_gram",
    "cross_gram",
    "eval_kernel",
    "explicit_poly2_features",
    "fit",
    "fit_explicit_passes",
    "fitted_values",
    "gram",
    "oos_r2",
    "predict",
]
