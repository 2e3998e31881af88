"""Run configuration: a YAML file merged with command-line overrides."""

from __future__ import annotations

import hashlib
import json
import os
import platform
from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import yaml

from .errors import ConfigError

# key -> (default, description); the CLI prints this table in every --help
CONFIG_KEYS: Dict[str, tuple] = {
    "data": (None, "path to the panel CSV (header row of series names, first column = period)"),
    "target": (None, "name of the series to forecast"),
    "targets": (None, "list of targets for backtest (defaults to [target])"),
    "sample_range": (None, "preset 1965-2007 | 1965-2019 | 1965-2023 | 1984-2007, 'start:end', or null for all rows"),
    "transforms": ("file", "'file' (codes from a 'transform' row), one code for all series, or a mapping series -> code; codes: level, diff, logdiff, hamilton, hamilton(h,p), FRED 1/2/5"),
    "kernel": ("gaussian", "linear | poly2 | gaussian"),
    "sigma": ("auto", "Gaussian width: 'auto' (two-fold CV) or a positive number"),
    "sigma_multipliers": ([0.25, 0.5, 1, 2, 4, 8], "CV grid as multiples of the median pairwise distance"),
    "cv_folds": (2, "number of contiguous CV folds; only 2 is accepted"),
    "tune_per_window": (True, "re-tune sigma at every window position (false: tune once at the first window)"),
    "proxies": ("auto:1", "'auto:L' for L automatic proxies or 'cols:a,b' for theory-guided proxy series"),
    "horizons": ([1, 2, 3, 4, 6, 8, 10, 12], "forecast horizons h"),
    "window_frac": (0.70, "rolling window width as a fraction of T"),
    "methods": (["AR", "DI", "PC", "Sq-PC", "PC-Sq", "kPCA", "3PRF", "k3PRF"], "methods to backtest"),
    "ar_lags": ([1, 2, 4, 8], "AR/DI lag orders; the best by OOS R2 is reported (oracle benchmark)"),
    "di_k": (None, "factor count for DI; null uses the eigenvalue-ratio test"),
    "k_max": (None, "largest factor count tried by the eigenvalue-ratio test; null = min(8, window/10)"),
    "tolerances": ([0, 5, 10, 20], "tolerance levels (percent) for compare"),
    "seed": (0, "master seed"),
    "threads": (None, "worker threads; null = all cores"),
    "out": ("out", "output directory"),
    "simulate": ({}, "simulation block: grid [[M,T],...], n_reps, K_f, K_g, L, factor_var, sigma_eps, sigma_eta, sigma_omega, loadings, factors"),
}


def defaults() -> Dict[str, Any]:
    return {k: (list(v[0]) if isinstance(v[0], list) else (dict(v[0]) if isinstance(v[0], dict) else v[0]))
            for k, v in CONFIG_KEYS.items()}


def help_text() -> str:
    lines = ["config keys (YAML file via --config; flags override):"]
    for k, (d, desc) in CONFIG_KEYS.items():
        lines.append(f"  {k}: {desc} [default: {json.dumps(d)}]")
    return "\n".join(lines)


def load_config(path: Optional[str]) -> Dict[str, Any]:
    cfg = defaults()
    if path is None:
        return cfg
    try:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except yaml.YAMLError as exc:
        raise ConfigError(f"config file {path} is not valid YAML: {exc}")
    if not isinstance(loaded, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    unknown = set(loaded) - set(CONFIG_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    base_dir = os.path.dirname(os.path.abspath(path))
    if loaded.get("data") and not os.path.isabs(loaded["data"]):
        loaded["data"] = os.path.join(base_dir, loaded["data"])
    cfg.update(loaded)
    return cfg


def parse_proxies(value) -> tuple:
    """Return ``("auto", L)`` or ``("theory", names)``."""
    s = str(value).strip()
    if s.startswith("auto"):
        n = s.split(":", 1)[1] if ":" in s else "1"
        try:
            L = int(n)
        except ValueError:
            raise ConfigError(f"bad proxies value {value!r}")
        if L < 1:
            raise ConfigError("auto proxies need L >= 1")
        return "auto", L
    if s.startswith("cols:"):
        names = tuple(c.strip() for c in s[5:].split(",") if c.strip())
        if not names:
            raise ConfigError("cols: needs at least one series name")
        return "theory", names
    raise ConfigError(f"proxies must be 'auto:L' or 'cols:a,b', got {value!r}")


def parse_sigma(value) -> Optional[float]:
    if value is None or str(value).strip().lower() == "auto":
        return None
    try:
        s = float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"sigma must be 'auto' or a number, got {value!r}")
    if not s > 0:
        raise ConfigError(f"sigma must be positive, got {s}")
    return s


def parse_int_list(value, name) -> list:
    if isinstance(value, str):
        value = [v for v in value.replace(" ", "").split(",") if v]
    try:
        out = [int(v) for v in value]
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a list of integers, got {value!r}")
    return out


def config_hash(cfg: Dict[str, Any]) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def versions() -> Dict[str, str]:
    import numpy
    import pandas
    import scipy

    from . import __version__

    return {
        "k3prf": __version__,
        "python": platform.python_version(),
        "numpy": numpy.__version__,
        "scipy": scipy.__version__,
        "pandas": pandas.__version__,
    }


def manifest(cfg: Dict[str, Any], command: str) -> Dict[str, Any]:
    # no paths or timestamps: identical hashes must give identical artifacts
    clean = {k: v for k, v in cfg.items() if k not in ("out", "threads")}
    if clean.get("data"):
        clean["data"] = os.path.basename(str(clean["data"]))
    return {
        "schema_version": 1,
        "command": command,
        "config_hash": config_hash(clean),
        "seed": cfg.get("seed"),
        "config": clean,
        "versions": versions(),
    }
