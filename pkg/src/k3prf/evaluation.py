"""Rolling-window out-of-sample backtests and best-method frequency tables.

A window position ``w`` covers panel rows ``[w, w + W - 1]``; the forecast
origin is the last row and the evaluated target is ``y[origin + h]``.
Everything a method sees at position ``w`` is sliced from those ``W`` rows.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from . import baselines as bl
from .autoproxy import build_auto_proxies
from .data import Panel, standardize_window
from .errors import ConfigError, InvalidInputError, K3prfError
from .estimator import fit, predict
from .kernels import KernelSpec
from .metrics import oos_r2
from .tuning import DEFAULT_MULTIPLIERS, cv_tune_sigma

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_HORIZONS = (1, 2, 3, 4, 6, 8, 10, 12)
ALL_METHODS = ("AR", "DI", "PC", "Sq-PC", "PC-Sq", "kPCA", "3PRF", "k3PRF")
AR_FAMILY = ("AR", "DI")
DEFAULT_TOLERANCES = (0, 5, 10, 20)
MIN_WINDOW = 40

__all__ = [
    "BacktestConfig",
    "BacktestReport",
    "CellResult",
    "ToleranceTable",
    "oos_r2",
    "rolling_backtest",
    "window_forecasts",
    "leakage_audit",
    "tolerance_table",
]


@dataclass(frozen=True)
class BacktestConfig:
    window_frac: float = 0.70
    horizons: Tuple[int, ...] = DEFAULT_HORIZONS
    methods: Tuple[str, ...] = ALL_METHODS
    proxy_mode: str = "auto"  # auto | theory
    n_proxies: int = 1
    theory_proxies: Tuple[str, ...] = ()
    kernel: str = "gaussian"  # linear | poly2 | gaussian
    sigma: Optional[float] = None  # None tunes by cross-validation
    sigma_multipliers: Tuple[float, ...] = DEFAULT_MULTIPLIERS
    cv_folds: int = 2
    tune_per_window: bool = True
    ar_lags: Tuple[int, ...] = (1, 2, 4, 8)
    di_k: Optional[int] = None  # None uses the eigenvalue-ratio test
    k_max: Optional[int] = None
    threads: int = 1

    def __post_init__(self):
        if not 0.0 < self.window_frac < 1.0:
            raise ConfigError(f"window_frac must lie in (0, 1), got {self.window_frac}")
        if not self.horizons or any(int(h) != h or h < 1 for h in self.horizons):
            raise ConfigError(f"horizons must be positive integers, got {self.horizons}")
        unknown = set(self.methods) - set(ALL_METHODS)
        if unknown:
            raise ConfigError(f"unknown methods {sorted(unknown)}; choose from {ALL_METHODS}")
        if self.proxy_mode not in ("auto", "theory"):
            raise ConfigError(f"proxy_mode must be auto or theory, got {self.proxy_mode!r}")
        if self.proxy_mode == "theory" and not self.theory_proxies:
            raise ConfigError("proxy_mode=theory needs theory_proxies")
        if self.kernel not in ("linear", "poly2", "gaussian"):
            raise ConfigError(f"kernel must be linear, poly2 or gaussian, got {self.kernel!r}")
        if self.cv_folds != 2:
            raise ConfigError(f"cv_folds must be 2, got {self.cv_folds}")
        if self.n_proxies < 1:
            raise ConfigError("n_proxies must be >= 1")

    def window_length(self, T: int) -> int:
        return int(round(self.window_frac * T))

    def to_dict(self) -> dict:
        # threads never changes results, so it stays out of reports
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items() if k != "threads"}


@dataclass
class CellResult:
    target: str
    method: str
    horizon: int
    oos_r2: float
    forecasts: np.ndarray
    actuals: np.ndarray
    train_means: np.ndarray
    origins: List[str] = field(default_factory=list)
    error: Optional[str] = None
    meta: dict = field(default_factory=dict)

    @property
    def n_forecasts(self) -> int:
        return int(self.actuals.size)


@dataclass
class BacktestReport:
    cells: Dict[Tuple[str, str, int], CellResult]
    config: dict = field(default_factory=dict)

    def r2(self, target, method, h) -> float:
        return self.cells[(target, method, h)].oos_r2

    @property
    def targets(self) -> List[str]:
        return sorted({k[0] for k in self.cells})

    @property
    def methods(self) -> List[str]:
        return sorted({k[1] for k in self.cells})

    @property
    def horizons(self) -> List[int]:
        return sorted({k[2] for k in self.cells})

    def rows(self) -> List[dict]:
        out = []
        for key in sorted(self.cells):
            c = self.cells[key]
            out.append(
                {
                    "schema_version": SCHEMA_VERSION,
                    "target": c.target,
                    "method": c.method,
                    "horizon": c.horizon,
                    "oos_r2": _fmt(c.oos_r2),
                    "n_forecasts": c.n_forecasts,
                    "error": c.error or "",
                }
            )
        return out

    def write_csv(self, path) -> None:
        rows = self.rows()
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()) if rows else ["schema_version"])
            w.writeheader()
            w.writerows(rows)

    def write_forecasts_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["schema_version", "target", "method", "horizon", "origin", "forecast", "actual", "train_mean"])
            for key in sorted(self.cells):
                c = self.cells[key]
                for o, f, a, m in zip(c.origins, c.forecasts, c.actuals, c.train_means):
                    w.writerow([SCHEMA_VERSION, c.target, c.method, c.horizon, o, _fmt(f), _fmt(a), _fmt(m)])

    def to_json(self) -> dict:
        cells = []
        for key in sorted(self.cells):
            c = self.cells[key]
            cells.append(
                {
                    "target": c.target,
                    "method": c.method,
                    "horizon": c.horizon,
                    "oos_r2": _json_float(c.oos_r2),
                    "forecasts": [_json_float(v) for v in c.forecasts],
                    "actuals": [_json_float(v) for v in c.actuals],
                    "train_means": [_json_float(v) for v in c.train_means],
                    "origins": list(c.origins),
                    "error": c.error,
                    "meta": c.meta,
                }
            )
        return {"schema_version": SCHEMA_VERSION, "config": self.config, "cells": cells}

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, obj) -> "BacktestReport":
        if not isinstance(obj, dict):
            with open(obj) as fh:
                obj = json.load(fh)
        cells = {}
        for c in obj["cells"]:
            cell = CellResult(
                c["target"],
                c["method"],
                int(c["horizon"]),
                _from_json_float(c["oos_r2"]),
                np.array([_from_json_float(v) for v in c.get("forecasts", [])]),
                np.array([_from_json_float(v) for v in c.get("actuals", [])]),
                np.array([_from_json_float(v) for v in c.get("train_means", [])]),
                list(c.get("origins", [])),
                c.get("error"),
                c.get("meta", {}),
            )
            cells[(cell.target, cell.method, cell.horizon)] = cell
        return cls(cells, obj.get("config", {}))

    @classmethod
    def from_csv(cls, path) -> "BacktestReport":
        cells = {}
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                h = int(row["horizon"])
                cells[(row["target"], row["method"], h)] = CellResult(
                    row["target"], row["method"], h, float(row["oos_r2"]),
                    np.empty(0), np.empty(0), np.empty(0), error=row.get("error") or None,
                )
        return cls(cells)

    @classmethod
    def merge(cls, reports: Iterable["BacktestReport"]) -> "BacktestReport":
        cells = {}
        for r in reports:
            cells.update(r.cells)
        return cls(cells)


def _fmt(x) -> str:
    return repr(float(x))


def _json_float(x):
    x = float(x)
    if np.isfinite(x):
        return x
    return "nan" if np.isnan(x) else ("inf" if x > 0 else "-inf")


def _from_json_float(x) -> float:
    return float(x) if x is not None else float("nan")


def _kernel_spec(config: BacktestConfig, sigma=None) -> KernelSpec:
    if config.kernel == "linear":
        return KernelSpec.linear()
    if config.kernel == "poly2":
        return KernelSpec.poly2()
    return KernelSpec.gaussian(sigma)


def _method_tasks(config: BacktestConfig):
    """Expand AR/DI into one sub-method per lag order."""
    tasks = []
    for m in config.methods:
        if m in AR_FAMILY:
            tasks.extend((m, p) for p in config.ar_lags)
        else:
            tasks.append((m, None))
    return tasks


class _SigmaCache:
    """Holds the frozen sigma per (target, horizon, method) when tuning once."""

    def __init__(self):
        self.values = {}


def window_forecasts(
    panel: Panel,
    config: BacktestConfig,
    h: int,
    start: int,
    sigma_cache: Optional[dict] = None,
) -> Dict[Tuple[str, Optional[int]], Tuple[float, dict]]:
    """All method forecasts for one window position and horizon.

    Returns ``{(method, lag): (forecast, meta)}``; a failing method yields
    ``nan`` and an ``error`` entry in its meta.
    """
    T = panel.T
    W = config.window_length(T)
    end = start + W  # exclusive
    if end - 1 + h >= T:
        raise InvalidInputError(f"window at {start} has no target for h={h}")
    names = panel.predictor_names
    # C order so BLAS takes the same path whatever layout the frame had
    X_w = np.ascontiguousarray(panel.data[names].to_numpy(dtype=float)[start:end])
    y_w = np.ascontiguousarray(panel.y[start:end])
    Xs, _, _ = standardize_window(X_w, names)
    Xa, ya = Xs[: W - h], y_w[h:]
    x_origin = Xs[-1:]

    k_max = config.k_max or bl.default_k_max(W)
    pcs = bl.pca_factors(Xs, min(k_max + 1, *Xs.shape))
    k = bl.eigenvalue_ratio_k(pcs.eigenvalues, k_max)
    di_k = k if config.di_k is None else int(config.di_k)

    Z_theory = None
    if config.proxy_mode == "theory":
        # proxies led by h, like the target proxy
        Zw = panel.data[list(config.theory_proxies)].to_numpy(dtype=float)[start:end]
        Z_theory = Zw[h:]

    def sigma_for(method, kk):
        if config.kernel != "gaussian":
            return None
        if config.sigma is not None:
            return float(config.sigma)
        key = (panel.y_name, h, method)
        if sigma_cache is not None and not config.tune_per_window and key in sigma_cache:
            return sigma_cache[key]
        if method == "k3PRF":
            res = cv_tune_sigma(
                Xs, y_w, h, config.sigma_multipliers,
                proxy_mode=config.proxy_mode, L=config.n_proxies,
                Z=Z_theory,
                method="k3prf",
            )
        else:
            res = cv_tune_sigma(Xs, y_w, h, config.sigma_multipliers, L=kk, method="kpca")
        if sigma_cache is not None and not config.tune_per_window:
            sigma_cache.setdefault(key, res.selected)
        return res.selected

    out = {}
    for method, p in _method_tasks(config):
        meta = {}
        try:
            if method == "AR":
                val = bl.ar_forecast(y_w, p, h).forecast
            elif method == "DI":
                val = bl.di_forecast(y_w, Xs, p, di_k, h, factors=pcs.factors).forecast
                meta["k"] = di_k
            elif method == "PC":
                val = bl.pc_regression_forecast(Xs, y_w, h, k).forecast
                meta["k"] = k
            elif method == "PC-Sq":
                val = bl.pc_sq_forecast(Xs, y_w, h, k).forecast
                meta["k"] = k
            elif method == "Sq-PC":
                val = bl.sq_pc_forecast(Xs, y_w, h, k).forecast
                meta["k"] = k
            elif method == "kPCA":
                s = sigma_for("kPCA", k)
                val = bl.kpca_regression_forecast(Xs, y_w, h, KernelSpec.gaussian(s), k).forecast
                meta.update(k=k, sigma=s)
            else:
                if method == "3PRF":
                    spec = KernelSpec.linear()
                else:
                    s = sigma_for("k3PRF", None)
                    spec = _kernel_spec(config, s)
                    if s is not None:
                        meta["sigma"] = s
                if Z_theory is not None:
                    Z = Z_theory
                else:
                    Z = build_auto_proxies(Xa, ya, spec, config.n_proxies).proxies
                val = float(predict(fit(Xa, ya, Z, spec), x_origin)[0])
        except (K3prfError, np.linalg.LinAlgError) as exc:
            val = float("nan")
            meta["error"] = f"{type(exc).__name__}: {exc}"
        if not np.isfinite(val):
            meta.setdefault("error", "non-finite forecast")
        out[(method, p)] = (float(val), meta)
    return out


def _positions(T: int, W: int, h: int) -> range:
    return range(0, T - W - h + 1)


def rolling_backtest(panel: Panel, config: BacktestConfig, targets: Optional[Sequence[str]] = None) -> BacktestReport:
    """Fixed-width rolling backtest over every target, horizon and method."""
    targets = list(targets) if targets is not None else [panel.y_name]
    if any(t is None for t in targets):
        raise ConfigError("no target selected")
    T = panel.T
    W = config.window_length(T)
    if W < MIN_WINDOW:
        raise ConfigError(f"window length {W} below the minimum of {MIN_WINDOW} observations")
    if T - W - max(config.horizons) + 1 < 2:
        raise ConfigError(
            f"window_frac={config.window_frac} leaves too few test points for h={max(config.horizons)} (T={T})"
        )
    labels = [str(getattr(t, "date", lambda: t)()) for t in panel.time_index]

    cells = {}
    for target in targets:
        p_t = panel.with_target(target)
        y = p_t.y
        for h in config.horizons:
            positions = list(_positions(T, W, h))
            cache = {}
            if not config.tune_per_window and positions:
                # fill the cache from the first window so later windows reuse it deterministically
                window_forecasts(p_t, config, h, positions[0], cache)

            def one(s, p_t=p_t, h=h, cache=cache):
                return window_forecasts(p_t, config, h, s, cache)

            if config.threads > 1:
                with ThreadPoolExecutor(max_workers=config.threads) as ex:
                    results = list(ex.map(one, positions))
            else:
                results = [one(s) for s in positions]

            actual = np.array([y[s + W - 1 + h] for s in positions])
            train_means = np.array([y[s + h : s + W].mean() for s in positions])
            origins = [labels[s + W - 1] for s in positions]
            for method, lag in _method_tasks(config):
                fc = np.array([r[(method, lag)][0] for r in results])
                metas = [r[(method, lag)][1] for r in results]
                errors = [m["error"] for m in metas if "error" in m]
                if errors:
                    score = -np.inf
                else:
                    sst = ((actual - train_means) ** 2).sum()
                    score = 1.0 - ((actual - fc) ** 2).sum() / sst if sst > 0 else -np.inf
                meta = {}
                sig = [m["sigma"] for m in metas if "sigma" in m]
                if sig:
                    meta["sigma"] = sig
                ks = [m["k"] for m in metas if "k" in m]
                if ks:
                    meta["k"] = ks
                name = method if lag is None else f"{method}[p={lag}]"
                cells[(target, name, h)] = CellResult(
                    target, name, h, float(score), fc, actual, train_means, origins,
                    errors[0] if errors else None, meta,
                )

            for method in AR_FAMILY:
                if method not in config.methods:
                    continue
                subs = [cells[(target, f"{method}[p={p}]", h)] for p in config.ar_lags]
                best = max(range(len(subs)), key=lambda i: (subs[i].oos_r2, -i))
                chosen = subs[best]
                meta = dict(chosen.meta)
                meta.update(selected_p=int(config.ar_lags[best]), oracle_lag_selection=True)
                cells[(target, method, h)] = CellResult(
                    target, method, h, chosen.oos_r2, chosen.forecasts, chosen.actuals,
                    chosen.train_means, chosen.origins, chosen.error, meta,
                )
    return BacktestReport(cells, config.to_dict())


def leakage_audit(
    panel: Panel,
    config: BacktestConfig,
    h: int,
    position: int,
    n_perturbations: int = 10,
    seed: int = 0,
) -> bool:
    """Perturb rows after the window and check the window's forecasts are unchanged.

    Returns True when every perturbation leaves every forecast bit-identical.
    """
    W = config.window_length(panel.T)
    base = window_forecasts(panel, config, h, position, {})
    rng = np.random.default_rng(seed)
    first_future = position + W
    if first_future >= panel.T:
        return True
    for _ in range(n_perturbations):
        data = panel.data.copy()
        r = rng.integers(first_future, panel.T)
        c = rng.integers(0, data.shape[1])
        data.iloc[r, c] = data.iloc[r, c] + rng.normal(scale=10.0)
        other = window_forecasts(Panel(data, panel.y_name, panel.transforms), config, h, position, {})
        for key, (val, _) in base.items():
            v2 = other[key][0]
            same = (np.isnan(val) and np.isnan(v2)) or val == v2
            if not same:
                log.warning("leakage: %s changed from %r to %r after perturbing row %d", key, val, v2, r)
                return False
    return True


@dataclass
class ToleranceTable:
    methods: List[str]
    tolerances: List[float]
    # (scope, tolerance) -> {method: percentage}; methods absent from a scope are missing
    values: Dict[Tuple[str, float], Dict[str, float]]
    n_cells: Dict[str, int]
    ties: List[str] = field(default_factory=list)

    SCOPES = ("All", "Short-run", "Long-run", "Excluding-AR")

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["schema_version", "scope", "tolerance", "n_cells"] + self.methods)
            for scope in self.SCOPES:
                for tol in self.tolerances:
                    row = self.values.get((scope, tol))
                    if row is None:
                        continue
                    w.writerow(
                        [SCHEMA_VERSION, scope, _tol_str(tol), self.n_cells[scope]]
                        + [("-" if m not in row else f"{row[m]:.2f}") for m in self.methods]
                    )
            for note in self.ties:
                w.writerow(["#", note])


def _tol_str(t) -> str:
    return str(int(t)) if float(t).is_integer() else repr(float(t))


def _winners(scores: Dict[str, float], eps: float) -> List[str]:
    names = sorted(scores)
    best = max(scores[m] for m in names)
    top = next(m for m in names if scores[m] == best)
    if eps == 0 or not (best > 0):
        return [top]
    cut = best * (1.0 - eps / 100.0)
    return [m for m in names if scores[m] >= cut]


def tolerance_table(
    reports,
    tolerances: Sequence[float] = DEFAULT_TOLERANCES,
    methods: Optional[Sequence[str]] = None,
) -> ToleranceTable:
    """Share of (target, horizon) cells in which each method counts as best.

    A method is best at tolerance ``eps`` when its R2 is at least
    ``best * (1 - eps/100)``; cells whose best R2 is not positive award only
    the maximum. Exact ties at the maximum go to the first method name in
    lexicographic order.
    """
    if isinstance(reports, BacktestReport):
        reports = [reports]
    report = BacktestReport.merge(reports)
    if not report.cells:
        raise InvalidInputError("empty report set")
    if methods is None:
        methods = [m for m in ALL_METHODS if m in report.methods]
        methods += [m for m in report.methods if m not in methods and "[p=" not in m]
    methods = list(methods)
    grid = {}
    for (target, m, h), c in report.cells.items():
        if m in methods:
            score = -np.inf if np.isnan(c.oos_r2) else c.oos_r2
            grid.setdefault((target, h), {})[m] = score

    scopes = {
        "All": (lambda h: True, methods),
        "Short-run": (lambda h: h <= 4, methods),
        "Long-run": (lambda h: h >= 6, methods),
        "Excluding-AR": (lambda h: True, [m for m in methods if m not in AR_FAMILY]),
    }
    values, n_cells, ties = {}, {}, []
    for scope, (keep_h, ms) in scopes.items():
        cells = [(k, {m: v for m, v in s.items() if m in ms}) for k, s in sorted(grid.items()) if keep_h(k[1])]
        cells = [(k, s) for k, s in cells if s]
        n_cells[scope] = len(cells)
        if not cells or not ms:
            continue
        for k, s in cells:
            best = max(s.values())
            tied = sorted(m for m in s if s[m] == best)
            if len(tied) > 1 and scope == "All":
                ties.append(f"tie at {k[0]} h={k[1]}: {', '.join(tied)} -> {tied[0]}")
        for tol in tolerances:
            counts = {m: 0 for m in ms}
            for _, s in cells:
                for m in _winners(s, float(tol)):
                    counts[m] += 1
            values[(scope, tol)] = {m: 100.0 * counts[m] / len(cells) for m in ms}
    return ToleranceTable(methods, list(tolerances), values, n_cells, ties)
