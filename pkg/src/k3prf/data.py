"""Panel ingestion, stationarity transforms, standardization and h-step alignment."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from .errors import DataError, InvalidInputError

SAMPLE_PRESETS = {
    "1965-2007": ("1965", "2007"),
    "1965-2019": ("1965", "2019"),
    "1965-2023": ("1965", "2023"),
    "1984-2007": ("1984", "2007"),
}
DEFAULT_SAMPLE = "1965-2007"

# FRED-QD numeric transformation codes that map onto the supported transforms
FRED_CODES = {"1": "level", "2": "diff", "5": "logdiff"}


@dataclass(frozen=True)
class TransformCode:
    kind: str = "level"  # level | diff | logdiff | hamilton
    h_lag: int = 8
    p_lags: int = 4

    def __post_init__(self):
        if self.kind not in ("level", "diff", "logdiff", "hamilton"):
            raise InvalidInputError(f"unknown transform {self.kind!r}")
        if self.kind == "hamilton" and (self.h_lag < 1 or self.p_lags < 1):
            raise InvalidInputError("hamilton transform needs h_lag >= 1 and p_lags >= 1")

    @classmethod
    def parse(cls, code) -> "TransformCode":
        if isinstance(code, TransformCode):
            return code
        if isinstance(code, dict):
            return cls(**code)
        s = str(code).strip().lower()
        if s.endswith(".0"):
            s = s[:-2]
        s = FRED_CODES.get(s, s)
        if s.startswith("hamilton"):
            # hamilton or hamilton(8,4)
            args = s[len("hamilton"):].strip("() ")
            if args:
                h, p = (int(a) for a in args.split(","))
                return cls("hamilton", h, p)
            return cls("hamilton")
        return cls(s)


@dataclass(frozen=True)
class Panel:
    """A balanced panel of series; ``y_name`` selects the forecast target."""

    data: pd.DataFrame
    y_name: Optional[str] = None
    transforms: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.data.isna().any().any():
            raise DataError("panel contains missing values")
        if not self.data.index.is_monotonic_increasing or self.data.index.has_duplicates:
            raise DataError("time index must be strictly increasing")
        if self.y_name is not None and self.y_name not in self.data.columns:
            raise DataError(f"target {self.y_name!r} not in panel")

    @property
    def time_index(self):
        return self.data.index

    @property
    def series_names(self):
        return list(self.data.columns)

    @property
    def T(self) -> int:
        return self.data.shape[0]

    @property
    def predictor_names(self):
        return [c for c in self.data.columns if c != self.y_name]

    @property
    def X(self) -> np.ndarray:
        return np.ascontiguousarray(self.data[self.predictor_names].to_numpy(dtype=float))

    @property
    def y(self) -> np.ndarray:
        if self.y_name is None:
            raise DataError("no target selected")
        return np.ascontiguousarray(self.data[self.y_name].to_numpy(dtype=float))

    def with_target(self, name: str) -> "Panel":
        return Panel(self.data, name, self.transforms)


def _parse_index(labels: Sequence[str]) -> pd.Index:
    labels = [s.strip() for s in labels]
    try:
        if all("q" in s.lower() for s in labels):
            return pd.PeriodIndex([s.upper().replace("-", "") for s in labels], freq="Q").to_timestamp()
        return pd.DatetimeIndex(pd.to_datetime(labels, format="mixed"))
    except (ValueError, TypeError) as exc:
        raise DataError(f"unparseable period labels: {exc}") from exc


def _range_bounds(sample_range) -> Tuple[pd.Timestamp, pd.Timestamp]:
    if isinstance(sample_range, str):
        sample_range = SAMPLE_PRESETS.get(sample_range, sample_range.split(":"))
    start, end = (str(s) for s in sample_range)
    lo = pd.Timestamp(start)
    hi = pd.Timestamp(end)
    if len(end) == 4:
        hi = pd.Timestamp(f"{end}-12-31")
    return lo, hi


def hamilton_filter(series, h_lag: int = 8, p_lags: int = 4) -> np.ndarray:
    """Residuals of ``x_t`` regressed on ``(1, x_{t-h}, ..., x_{t-h-p+1})``.

    The output has length ``T - h_lag - p_lags + 1``; element ``i`` belongs
    to period ``i + h_lag + p_lags - 1`` of the input.
    """
    x = np.asarray(series, dtype=float).ravel()
    T = x.size
    if h_lag < 1 or p_lags < 1:
        raise InvalidInputError("h_lag and p_lags must be >= 1")
    if T <= h_lag + p_lags + 10:
        raise InvalidInputError(f"series of length {T} too short for hamilton({h_lag}, {p_lags})")
    first = h_lag + p_lags - 1
    t = np.arange(first, T)
    D = np.column_stack([np.ones(t.size)] + [x[t - h_lag - j] for j in range(p_lags)])
    target = x[t]
    coef, *_ = np.linalg.lstsq(D, target, rcond=None)
    return target - D @ coef


def _transform_loss(code: TransformCode) -> int:
    """Leading observations a transform leaves undefined."""
    if code.kind == "level":
        return 0
    if code.kind == "hamilton":
        return code.h_lag + code.p_lags - 1
    return 1


def apply_transform(x: pd.Series, code: TransformCode) -> pd.Series:
    if code.kind == "level":
        return x.astype(float)
    if code.kind == "diff":
        return x.diff()
    if code.kind == "logdiff":
        if (x <= 0).any():
            raise DataError(f"logdiff on nonpositive values in series {x.name!r}")
        return np.log(x).diff()
    valid = x.dropna()
    out = pd.Series(np.nan, index=x.index, name=x.name)
    if valid.size <= code.h_lag + code.p_lags + 10:
        return out
    r = hamilton_filter(valid.to_numpy(), code.h_lag, code.p_lags)
    out.loc[valid.index[code.h_lag + code.p_lags - 1:]] = r
    return out


def read_raw_csv(path) -> Tuple[pd.DataFrame, Dict[str, str]]:
    """Read a FRED-QD style CSV into a frame of floats (NaN for empty cells)."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    names = header[1:]
    if len(set(names)) != len(names):
        raise DataError(f"{path}: duplicate series names")
    codes = {}
    body = rows[1:]
    # optional metadata rows: "transform" carries per-series codes, "factors" is ignored
    while body and body[0] and body[0][0].strip().lower() in ("transform", "tcode", "factors"):
        meta = body.pop(0)
        if meta[0].strip().lower() != "factors":
            codes = {n: c.strip() for n, c in zip(names, meta[1:]) if c.strip()}
    labels, values = [], []
    for i, row in enumerate(body):
        if not row or not any(c.strip() for c in row):
            continue
        if len(row) != len(header):
            raise DataError(f"{path}: row {i + 2} has {len(row)} cells, expected {len(header)}")
        labels.append(row[0])
        vals = []
        for j, cell in enumerate(row[1:]):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("na", "nan"):
                vals.append(math.nan)
                continue
            try:
                vals.append(float(cell))
            except ValueError:
                raise DataError(f"{path}: unparseable cell {cell!r} at row {i + 2}, column {j + 2} ({names[j]})")
        values.append(vals)
    frame = pd.DataFrame(values, index=_parse_index(labels), columns=names)
    frame.index.name = header[0] or "period"
    return frame, codes


def load_csv(path, config: Optional[dict] = None) -> Panel:
    """Load, transform, restrict to the sample range and drop incomplete series.

    Config keys: ``sample_range`` (preset name, ``"start:end"`` or pair;
    ``None`` keeps everything), ``transforms`` (a default code or a mapping
    with optional ``"default"``), ``target``.
    """
    config = dict(config or {})
    frame, file_codes = read_raw_csv(path)
    tcfg = config.get("transforms", "file")
    out = {}
    used = {}
    codes_used = {}
    for name in frame.columns:
        if isinstance(tcfg, dict):
            code = tcfg.get(name, tcfg.get("default", file_codes.get(name, "level")))
        elif tcfg == "file":
            code = file_codes.get(name, "level")
        else:
            code = tcfg
        tc = TransformCode.parse(code)
        out[name] = apply_transform(frame[name], tc)
        used[name] = tc.kind
        codes_used[name] = tc
    # rows consumed by the transforms themselves are not gaps in the data
    lead = max(_transform_loss(tc) for tc in codes_used.values())
    data = pd.DataFrame(out, index=frame.index).iloc[lead:]
    sample = config.get("sample_range")
    if sample is not None:
        lo, hi = _range_bounds(sample)
        data = data.loc[(data.index >= lo) & (data.index <= hi)]
    data = data.loc[:, data.notna().all()]
    if data.shape[1] < 2:
        raise DataError(f"{path}: fewer than 2 series without missing values in the sample")
    if data.shape[0] < 2:
        raise DataError(f"{path}: sample range leaves {data.shape[0]} rows")
    target = config.get("target")
    if target is not None and target not in data.columns:
        raise DataError(f"target {target!r} missing or dropped for incomplete data")
    return Panel(data, target, {c: used[c] for c in data.columns})


def write_csv(panel: Panel, path) -> None:
    panel.data.to_csv(path, float_format="%.17g", date_format="%Y-%m-%d")


def standardize_window(X, names: Optional[Sequence[str]] = None) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Z-score every column with the window's own mean and standard deviation."""
    X = np.asarray(X, dtype=float)
    means = X.mean(axis=0)
    sds = X.std(axis=0)
    bad = np.flatnonzero(~(sds > 1e-12 * np.maximum(np.abs(means), 1.0)))
    if bad.size:
        labels = [names[i] for i in bad] if names is not None else bad.tolist()
        raise DataError(f"constant series in window: {labels}")
    return (X - means) / sds, means, sds


def apply_standardization(X, means, sds) -> np.ndarray:
    return (np.asarray(X, dtype=float) - means) / sds


def invert_standardization(X_std, means, sds) -> np.ndarray:
    return np.asarray(X_std, dtype=float) * sds + means


def make_direct_horizon(y, X, h: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pair features at ``t`` with the target at ``t + h``; returns ``(X_t, y_{t+h})``."""
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    T = y.shape[0]
    if h < 1:
        raise InvalidInputError(f"horizon must be >= 1, got {h}")
    if h >= T:
        raise InvalidInputError(f"horizon {h} too large for {T} observations")
    return X[: T - h], y[h:]
