"""Command-line entry point: ``k3prf {forecast,backtest,tune,simulate,compare}``."""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from typing import Any, Dict, List, Optional

import numpy as np

from .autoproxy import build_auto_proxies
from .config import (
    help_text,
    load_config,
    manifest,
    parse_int_list,
    parse_proxies,
    parse_sigma,
)
from .data import load_csv, standardize_window
from .errors import ConfigError, DataError, IllConditionedError, InvalidInputError, K3prfError
from .estimator import fit, predict
from .evaluation import SCHEMA_VERSION, BacktestConfig, BacktestReport, rolling_backtest, tolerance_table
from .kernels import KernelSpec
from .tuning import cv_tune_sigma

log = logging.getLogger("k3prf")

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

DEFAULT_SIM_GRID = [[50, 50], [100, 100], [200, 200], [400, 400]]
SIM_KEYS = ("T", "M", "K_f", "K_g", "L", "factor_var", "sigma_eps", "sigma_eta", "sigma_omega",
            "beta0", "beta_f", "lambda0", "loadings", "factors", "eps_ar")


# ----------------------------------------------------------------------------
# configuration plumbing


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="YAML config file")
    p.add_argument("--data", help="panel CSV")
    p.add_argument("--target", help="series to forecast")
    p.add_argument("--horizons", help="comma-separated horizons, e.g. 1,4,12")
    p.add_argument("--kernel", choices=["linear", "poly2", "gaussian"])
    p.add_argument("--sigma", help="'auto' or a positive Gaussian width")
    p.add_argument("--proxies", help="'auto:L' or 'cols:a,b'")
    p.add_argument("--window-frac", type=float, dest="window_frac")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--threads", type=int, help="worker threads (default: all cores)")


def resolve_config(args: argparse.Namespace) -> Dict[str, Any]:
    """Config file values overridden by any flag that was given."""
    cfg = load_config(args.config)
    for key in ("data", "target", "kernel", "sigma", "proxies", "window_frac", "seed", "out", "threads"):
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    if getattr(args, "horizons", None) is not None:
        cfg["horizons"] = args.horizons
    cfg["horizons"] = parse_int_list(cfg["horizons"], "horizons")
    if any(h < 1 for h in cfg["horizons"]):
        raise ConfigError("horizons must be positive")
    if cfg["kernel"] not in ("linear", "poly2", "gaussian"):
        raise ConfigError(f"kernel must be linear, poly2 or gaussian, got {cfg['kernel']!r}")
    cfg["sigma"] = "auto" if parse_sigma(cfg["sigma"]) is None else parse_sigma(cfg["sigma"])
    parse_proxies(cfg["proxies"])
    if cfg["threads"] is None:
        cfg["threads"] = os.cpu_count() or 1
    if int(cfg["threads"]) < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


def _file_sha256(path) -> Optional[str]:
    if not path or not os.path.exists(path):
        return None
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(cfg: Dict[str, Any], command: str, outputs: List[str], extra_inputs=()) -> str:
    """Write ``manifest.json`` next to the outputs and return its path."""
    hashed = dict(cfg)
    hashed["data_sha256"] = _file_sha256(cfg.get("data"))
    for i, p in enumerate(extra_inputs):
        hashed[f"input_{i}_sha256"] = _file_sha256(p)
    m = manifest(hashed, command)
    m["outputs"] = sorted(os.path.basename(o) for o in outputs)
    path = os.path.join(cfg["out"], "manifest.json")
    with open(path, "w") as fh:
        json.dump(m, fh, indent=1, sort_keys=True, default=str)
        fh.write("\n")
    return path


def _load_panel(cfg):
    if not cfg.get("data"):
        raise ConfigError("no data file given (--data or 'data' in the config)")
    if not os.path.exists(cfg["data"]):
        raise DataError(f"data file not found: {cfg['data']}")
    panel = load_csv(cfg["data"], cfg)
    if panel.y_name is None:
        raise ConfigError("no target given (--target or 'target' in the config)")
    return panel


def _kernel(cfg, sigma=None) -> KernelSpec:
    if cfg["kernel"] == "linear":
        return KernelSpec.linear()
    if cfg["kernel"] == "poly2":
        return KernelSpec.poly2()
    return KernelSpec.gaussian(sigma)


def _backtest_config(cfg) -> BacktestConfig:
    mode, val = parse_proxies(cfg["proxies"])
    return BacktestConfig(
        window_frac=float(cfg["window_frac"]),
        horizons=tuple(cfg["horizons"]),
        methods=tuple(cfg["methods"]),
        proxy_mode=mode,
        n_proxies=val if mode == "auto" else len(val),
        theory_proxies=() if mode == "auto" else tuple(val),
        kernel=cfg["kernel"],
        sigma=parse_sigma(cfg["sigma"]),
        sigma_multipliers=tuple(float(m) for m in cfg["sigma_multipliers"]),
        cv_folds=int(cfg["cv_folds"]),
        tune_per_window=bool(cfg["tune_per_window"]),
        ar_lags=tuple(parse_int_list(cfg["ar_lags"], "ar_lags")),
        di_k=cfg["di_k"],
        k_max=cfg["k_max"],
        threads=int(cfg["threads"]),
    )


def _ensure_out(cfg) -> str:
    os.makedirs(cfg["out"], exist_ok=True)
    return cfg["out"]


def _label(t) -> str:
    return str(getattr(t, "date", lambda: t)())


# ----------------------------------------------------------------------------
# subcommands


def _theory_proxies(panel, names, h):
    missing = [n for n in names if n not in panel.data.columns]
    if missing:
        raise DataError(f"proxy series not in the data: {missing}")
    return np.ascontiguousarray(panel.data[list(names)].to_numpy(dtype=float)[h:])


def cmd_forecast(cfg) -> List[str]:
    """Full-sample k3PRF fit per horizon: fitted values plus the h-step forecast."""
    panel = _load_panel(cfg)
    out = _ensure_out(cfg)
    mode, val = parse_proxies(cfg["proxies"])
    Xs, _, _ = standardize_window(panel.X, panel.predictor_names)
    y = panel.y
    labels = [_label(t) for t in panel.time_index]
    T = panel.T
    rows = []
    for h in cfg["horizons"]:
        if h >= T - 2:
            raise DataError(f"horizon {h} leaves no estimation sample (T={T})")
        Xa, ya = Xs[: T - h], y[h:]
        sigma = None
        if cfg["kernel"] == "gaussian":
            sigma = parse_sigma(cfg["sigma"])
            if sigma is None:
                Zt = _theory_proxies(panel, val, h) if mode == "theory" else None
                sigma = cv_tune_sigma(
                    Xs, y, h, cfg["sigma_multipliers"], proxy_mode=mode,
                    L=val if mode == "auto" else len(val), Z=Zt,
                    cv_folds=int(cfg["cv_folds"]), threads=int(cfg["threads"]),
                ).selected
        spec = _kernel(cfg, sigma)
        if mode == "theory":
            Z = _theory_proxies(panel, val, h)
        else:
            Z = build_auto_proxies(Xa, ya, spec, val).proxies
        f = fit(Xa, ya, Z, spec)
        sig = "" if sigma is None else repr(float(sigma))
        for t in range(T - h):
            rows.append([SCHEMA_VERSION, h, "fitted", labels[t], labels[t + h], repr(float(ya[t])),
                         repr(float(f.fitted[t])), sig])
        fc = float(predict(f, Xs[-1:])[0])
        rows.append([SCHEMA_VERSION, h, "forecast", labels[-1], "", "", repr(fc), sig])
    path = os.path.join(out, "forecast.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["schema_version", "horizon", "kind", "origin", "target_period", "actual", "value", "sigma"])
        w.writerows(rows)
    return [path]


def cmd_backtest(cfg) -> List[str]:
    panel = _load_panel(cfg)
    out = _ensure_out(cfg)
    bc = _backtest_config(cfg)
    targets = cfg["targets"] or [cfg["target"]]
    report = rolling_backtest(panel, bc, targets)
    paths = [os.path.join(out, n) for n in ("report.csv", "report.json", "forecasts.csv")]
    report.write_csv(paths[0])
    report.write_json(paths[1])
    report.write_forecasts_csv(paths[2])
    return paths


def cmd_tune(cfg) -> List[str]:
    panel = _load_panel(cfg)
    out = _ensure_out(cfg)
    if cfg["kernel"] != "gaussian":
        raise ConfigError("tune only applies to the gaussian kernel")
    mode, val = parse_proxies(cfg["proxies"])
    Xs, _, _ = standardize_window(panel.X, panel.predictor_names)
    results = {}
    for h in cfg["horizons"]:
        Zt = _theory_proxies(panel, val, h) if mode == "theory" else None
        res = cv_tune_sigma(
            Xs, panel.y, h, cfg["sigma_multipliers"], proxy_mode=mode,
            L=val if mode == "auto" else len(val), Z=Zt,
            cv_folds=int(cfg["cv_folds"]), threads=int(cfg["threads"]),
        )
        results[str(h)] = res.to_dict()
    path = os.path.join(out, "tune.json")
    with open(path, "w") as fh:
        json.dump({"schema_version": SCHEMA_VERSION, "target": panel.y_name, "horizons": results},
                  fh, indent=1, sort_keys=True)
        fh.write("\n")
    return [path]


def cmd_simulate(cfg) -> List[str]:
    from .simulation import SimConfig, rate_study

    out = _ensure_out(cfg)
    block = dict(cfg.get("simulate") or {})
    unknown = set(block) - set(SIM_KEYS) - {"grid", "n_reps"}
    if unknown:
        raise ConfigError(f"unknown simulate keys: {sorted(unknown)}")
    grid = block.pop("grid", DEFAULT_SIM_GRID)
    n_reps = int(block.pop("n_reps", 100))
    for k in ("factor_var", "beta_f"):
        if block.get(k) is not None:
            block[k] = tuple(float(v) for v in block[k])
    try:
        base = SimConfig(**block)
    except TypeError as exc:
        raise ConfigError(f"bad simulate block: {exc}")
    curve = rate_study(grid, n_reps, base, seed=int(cfg["seed"]), threads=int(cfg["threads"]))
    path = os.path.join(out, "rate_curve.csv")
    curve.write_csv(path)
    return [path]


def cmd_compare(cfg, reports: List[str]) -> List[str]:
    out = _ensure_out(cfg)
    loaded = []
    for p in reports:
        if not os.path.exists(p):
            raise DataError(f"report not found: {p}")
        try:
            loaded.append(BacktestReport.from_json(p) if p.endswith(".json") else BacktestReport.from_csv(p))
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise DataError(f"cannot read report {p}: {exc}")
    tol = [float(t) for t in cfg["tolerances"]]
    table = tolerance_table(loaded, tol)
    path = os.path.join(out, "tolerance_table.csv")
    table.write_csv(path)
    return [path]


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    epilog = help_text() + "\n\nexit codes: 2 config error, 3 data error, 4 numerical failure\nenv: K3PRF_LOG sets the log level (e.g. DEBUG)"
    parser = argparse.ArgumentParser(
        prog="k3prf", description="Kernel three-pass regression filter forecasting.",
        epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    docs = {
        "forecast": "fit on the full sample and write fitted values plus h-step forecasts",
        "backtest": "rolling-window out-of-sample backtest of every configured method",
        "tune": "cross-validate the Gaussian kernel width per horizon",
        "simulate": "Monte Carlo convergence-rate study on the simulated factor model",
        "compare": "best-method frequency table across backtest reports",
    }
    for name, doc in docs.items():
        p = sub.add_parser(name, help=doc, description=doc, epilog=epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        _add_common(p)
        if name == "compare":
            p.add_argument("reports", nargs="+", help="report.json or report.csv files")
            p.add_argument("--tolerances", help="comma-separated tolerance percentages")
    return parser


def _configure_logging() -> None:
    level = os.environ.get("K3PRF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[List[str]] = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        if args.command == "compare":
            if args.tolerances is not None:
                cfg["tolerances"] = [float(t) for t in args.tolerances.split(",") if t.strip()]
            outputs = cmd_compare(cfg, args.reports)
            write_manifest(cfg, "compare", outputs, args.reports)
        else:
            cmd = {"forecast": cmd_forecast, "backtest": cmd_backtest, "tune": cmd_tune,
                   "simulate": cmd_simulate}[args.command]
            outputs = cmd(cfg)
            write_manifest(cfg, args.command, outputs)
    except ConfigError as exc:
        print(f"k3prf: config error ({_origin(exc)}): {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError) as exc:
        print(f"k3prf: data error ({_origin(exc)}): {exc}", file=sys.stderr)
        return EXIT_DATA
    except (IllConditionedError, np.linalg.LinAlgError, InvalidInputError, K3prfError) as exc:
        print(f"k3prf: numerical failure ({_origin(exc)}): {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    for o in outputs:
        print(o)
    return 0


def _origin(exc: BaseException) -> str:
    """Module where the exception was raised."""
    tb = exc.__traceback__
    mod = "k3prf"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", mod)
        tb = tb.tb_next
    return mod


if __name__ == "__main__":
    sys.exit(main())
