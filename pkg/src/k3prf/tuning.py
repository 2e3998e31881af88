"""Two-fold, time-contiguous cross-validation of the Gaussian kernel width."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.spatial.distance import pdist

from .autoproxy import build_auto_proxies
from .baselines import kpca_fit
from .errors import ConfigError, IllConditionedError, InvalidInputError, K3prfError
from .estimator import fit, predict
from .kernels import KernelSpec
from .linalg import ols
from .metrics import oos_r2

DEFAULT_MULTIPLIERS = (0.25, 0.5, 1.0, 2.0, 4.0, 8.0)
MAX_EXACT_ROWS = 2000


@dataclass
class TuneResult:
    grid: List[float]
    cv_scores: List[float]
    selected: float
    fold_spec: str
    multipliers: List[float] = field(default_factory=list)
    anchor: float = float("nan")

    def to_dict(self) -> dict:
        return {
            "grid": [float(g) for g in self.grid],
            "multipliers": [float(m) for m in self.multipliers],
            "cv_scores": [None if not np.isfinite(s) else float(s) for s in self.cv_scores],
            "selected": float(self.selected),
            "anchor": float(self.anchor),
            "fold_spec": self.fold_spec,
        }


def median_heuristic_sigma(X_std, seed: int = 0, max_rows: int = MAX_EXACT_ROWS) -> float:
    """Median pairwise Euclidean distance between rows.

    Exact up to ``max_rows`` rows; above that a seeded row subsample is used.
    """
    X = np.asarray(X_std, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.shape[0] < 3:
        raise InvalidInputError("median heuristic needs at least 3 rows")
    if X.shape[0] > max_rows:
        idx = np.sort(np.random.default_rng(seed).choice(X.shape[0], max_rows, replace=False))
        X = X[idx]
    d = pdist(X)
    if not (d > 0).any():
        raise InvalidInputError("all rows are identical")
    med = float(np.median(d))
    if med == 0.0:
        med = float(np.median(d[d > 0]))
    return med


def _fit_predict(method, spec, Xtr, ytr, Xte, L, Z_tr):
    if method == "k3prf":
        Z = Z_tr if Z_tr is not None else build_auto_proxies(Xtr, ytr, spec, L).proxies
        return predict(fit(Xtr, ytr, Z, spec), Xte)
    if method == "kpca":
        kp = kpca_fit(Xtr, spec, L)
        coef = ols(kp.factors, ytr, intercept=True, name="kPCA regression")
        return coef[0] + kp.transform(Xte) @ coef[1:]
    raise InvalidInputError(f"unknown tuning method {method!r}")


def _score(method, spec, folds, L, Z_folds):
    scores = []
    for (a, b) in ((0, 1), (1, 0)):
        Xtr, ytr = folds[a]
        Xte, yte = folds[b]
        pred = _fit_predict(method, spec, Xtr, ytr, Xte, L, None if Z_folds is None else Z_folds[a])
        scores.append(oos_r2(yte, pred, ytr.mean()))
    return float(np.mean(scores))


def cv_tune_sigma(
    X,
    y,
    h: int = 1,
    grid_multipliers: Sequence[float] = DEFAULT_MULTIPLIERS,
    proxy_mode: str = "auto",
    L: int = 1,
    Z=None,
    method: str = "k3prf",
    cv_folds: int = 2,
    anchor: Optional[float] = None,
    threads: int = 1,
) -> TuneResult:
    """Pick the Gaussian width by two-fold contiguous CV on the ``h``-aligned pairs.

    ``X`` and ``y`` are the unaligned window series. Each candidate is
    ``multiplier * anchor`` with the median heuristic as default anchor.
    ``proxy_mode="theory"`` uses the columns of ``Z``, given row-aligned
    with the ``len(y) - h`` target pairs.
    """
    if cv_folds != 2:
        raise ConfigError(f"cv_folds must be 2 (two contiguous halves), got {cv_folds}")
    mults = [float(m) for m in grid_multipliers]
    if not mults or any(m <= 0 for m in mults):
        raise InvalidInputError("grid must be a nonempty list of positive multipliers")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if anchor is None:
        anchor = median_heuristic_sigma(X)
    Xa, ya = X[: len(y) - h], y[h:]
    n = ya.shape[0]
    half = n // 2
    if half < max(L + 2, 5):
        raise InvalidInputError(f"not enough aligned observations ({n}) for two folds")
    folds = [(Xa[:half], ya[:half]), (Xa[half:], ya[half:])]
    Z_folds = None
    if proxy_mode == "theory":
        if Z is None:
            raise InvalidInputError("theory proxy mode needs Z")
        Zl = np.asarray(Z, dtype=float)
        if Zl.shape[0] != n:
            raise InvalidInputError(f"theory proxies have {Zl.shape[0]} rows, expected {n}")
        Z_folds = [Zl[:half], Zl[half:]]
        L = Zl.shape[1] if Zl.ndim == 2 else 1

    # tie-break toward the smaller sigma
    order = np.argsort(mults, kind="stable")
    mults = [mults[i] for i in order]
    grid = [m * anchor for m in mults]

    def run(sigma):
        try:
            return _score(method, KernelSpec.gaussian(sigma), folds, L, Z_folds)
        except (K3prfError, np.linalg.LinAlgError):
            return -np.inf

    if threads > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            scores = list(ex.map(run, grid))
    else:
        scores = [run(s) for s in grid]
    if not np.isfinite(scores).any():
        raise IllConditionedError("every sigma candidate produced an ill-conditioned fit", matrix="cv")
    best = int(np.argmax(scores))
    spec = f"contiguous halves of {n} aligned pairs: [0,{half}) and [{half},{n}), h={h}"
    return TuneResult(grid, scores, grid[best], spec, mults, float(anchor))
