"""Factor-model simulator and Monte Carlo rate checks.

Draws follow

    phi(X) = F Phi' + eps,   y = beta0 + F beta + eta,   Z = lambda0' + F Lambda' + omega

with ``F = [f, g]``, ``beta = (beta_f, 0)`` and ``Lambda = [Lambda_f, 0]``,
so the proxies load on the relevant factors only. The estimator is run with
the linear kernel on the generated features, which keeps the feature
dimension ``M`` explicit.

Randomness: replication ``r`` at grid point ``g`` uses
``numpy.random.default_rng([seed, g, r])``, independent of scheduling.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import InvalidInputError
from .estimator import K3prfFit, fit, fit_explicit_passes
from .kernels import KernelSpec, explicit_poly2_features
from .linalg import sym_solve

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class SimConfig:
    T: int = 200
    M: int = 200
    K_f: int = 1
    K_g: int = 1
    L: Optional[int] = None  # defaults to K_f
    factor_var: Optional[Tuple[float, ...]] = None  # diagonal of Delta_F, distinct entries
    sigma_eps: float = 1.0
    sigma_eta: float = 1.0
    sigma_omega: float = 1.0
    beta0: float = 0.0
    beta_f: Optional[Tuple[float, ...]] = None
    lambda0: float = 0.0
    loadings: str = "orthonormal"  # orthonormal | random
    factors: str = "random"  # random | exact (sample moments forced to Delta_F, f orthogonal to g)
    eps_ar: float = 0.0  # AR(1) coefficient of the idiosyncratic features
    seed: int = 0

    def __post_init__(self):
        if self.T < 3 or self.M < 1 or self.K_f < 1 or self.K_g < 0:
            raise InvalidInputError("need T >= 3, M >= 1, K_f >= 1, K_g >= 0")
        if self.loadings not in ("orthonormal", "random"):
            raise InvalidInputError(f"unknown loadings mode {self.loadings!r}")
        if self.factors not in ("random", "exact"):
            raise InvalidInputError(f"unknown factors mode {self.factors!r}")
        if self.loadings == "orthonormal" and self.M < self.K + 1:
            raise InvalidInputError(f"orthonormal loadings need M > K ({self.M} <= {self.K})")
        if self.factor_var is not None:
            if len(self.factor_var) != self.K:
                raise InvalidInputError(f"factor_var needs {self.K} entries")
            if len(set(self.factor_var)) != self.K or min(self.factor_var) <= 0:
                raise InvalidInputError("factor variances must be positive and distinct")
        if self.beta_f is not None and len(self.beta_f) != self.K_f:
            raise InvalidInputError(f"beta_f needs {self.K_f} entries")
        if not -1.0 < self.eps_ar < 1.0:
            raise InvalidInputError("eps_ar must lie in (-1, 1)")

    @property
    def K(self) -> int:
        return self.K_f + self.K_g

    @property
    def n_proxies(self) -> int:
        return self.L or self.K_f

    @property
    def delta_F(self) -> np.ndarray:
        if self.factor_var is not None:
            return np.diag(np.asarray(self.factor_var, dtype=float))
        # distinct, bounded: 1.0, 1.5, 2.0, ...
        return np.diag(1.0 + 0.5 * np.arange(self.K))

    @property
    def beta_vec(self) -> np.ndarray:
        if self.beta_f is not None:
            return np.asarray(self.beta_f, dtype=float)
        return np.ones(self.K_f)


@dataclass(frozen=True)
class SimDraw:
    Phi_X: np.ndarray
    y: np.ndarray
    Z: np.ndarray
    F: np.ndarray
    Phi: np.ndarray
    Lambda: np.ndarray
    beta: np.ndarray
    beta0: float
    lambda0: np.ndarray
    eps: np.ndarray
    eta: np.ndarray
    omega: np.ndarray
    config: SimConfig

    @property
    def f(self) -> np.ndarray:
        return self.F[:, : self.config.K_f]

    @property
    def g(self) -> np.ndarray:
        return self.F[:, self.config.K_f :]

    @property
    def Lambda_f(self) -> np.ndarray:
        return self.Lambda[:, : self.config.K_f]

    @property
    def delta_f(self) -> np.ndarray:
        k = self.config.K_f
        return self.config.delta_F[:k, :k]

    @property
    def conditional_mean(self) -> np.ndarray:
        """``E_t y_{t+h} = beta0 + F_t' beta``."""
        return self.beta0 + self.F @ self.beta


def _exact_factors(rng, T, delta) -> np.ndarray:
    K = delta.shape[0]
    G = rng.standard_normal((T, K))
    G -= G.mean(axis=0)
    # whiten so G'G/T = I exactly, then scale
    C = np.linalg.cholesky(G.T @ G / T)
    G = np.linalg.solve(C, G.T).T
    return G * np.sqrt(np.diag(delta))


def _loadings(rng, M, K, mode) -> np.ndarray:
    P = rng.standard_normal((M, K))
    if mode == "random":
        return P
    P -= P.mean(axis=0)
    Q, R = np.linalg.qr(P)
    Q = Q * np.sign(np.diag(R))
    return np.sqrt(M) * Q


def simulate(config: SimConfig, rng: Optional[np.random.Generator] = None) -> SimDraw:
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    T, M, K, Kf, L = config.T, config.M, config.K, config.K_f, config.n_proxies
    delta = config.delta_F
    if config.factors == "exact":
        if T <= K:
            raise InvalidInputError("exact factor moments need T > K")
        F = _exact_factors(rng, T, delta)
    else:
        F = rng.standard_normal((T, K)) * np.sqrt(np.diag(delta))
    Phi = _loadings(rng, M, K, config.loadings)

    if L == Kf:
        Lambda_f = np.eye(Kf)
    else:
        Lambda_f = rng.standard_normal((L, Kf))
    Lambda = np.hstack([Lambda_f, np.zeros((L, K - Kf))])
    beta = np.concatenate([config.beta_vec, np.zeros(K - Kf)])
    lambda0 = np.full(L, float(config.lambda0))

    eps = config.sigma_eps * rng.standard_normal((T, M))
    if config.eps_ar != 0.0:
        a = config.eps_ar
        eps[0] /= np.sqrt(1.0 - a * a)
        for t in range(1, T):
            eps[t] = a * eps[t - 1] + eps[t]
        eps *= np.sqrt(1.0 - a * a)
    eta = config.sigma_eta * rng.standard_normal(T)
    omega = config.sigma_omega * rng.standard_normal((T, L))

    Phi_X = F @ Phi.T + eps
    y = config.beta0 + F @ beta + eta
    Z = lambda0 + F @ Lambda.T + omega
    return SimDraw(Phi_X, y, Z, F, Phi, Lambda, beta, float(config.beta0), lambda0, eps, eta, omega, config)


def fit_draw(draw: SimDraw, Z=None) -> K3prfFit:
    """Linear-kernel fit on the explicit features of a draw."""
    return fit(draw.Phi_X, draw.y, draw.Z if Z is None else Z, KernelSpec.linear())


def compute_rotations(draw: SimDraw, f: K3prfFit) -> Tuple[np.ndarray, np.ndarray]:
    """Rotation matrices ``(H_f, G_beta)`` linking estimated and true quantities.

    Uses ``F_A = Z'JZ / T`` and ``F_B = Z'J phi phi' J Z / (M T^2)`` from the
    fit and the population ``Lambda_f`` and ``Delta_f`` from the draw.
    """
    if f.spec.family != "linear":
        raise InvalidInputError("rotations need a linear-kernel fit on explicit features")
    T, M = draw.Phi_X.shape
    F_A = f.W / T
    F_B = f.A / (M * T * T)
    Lf = draw.Lambda_f
    D = draw.delta_f
    H_f = F_A @ sym_solve(F_B, Lf @ D, name="F_B")
    inner = Lf @ D @ D @ D @ Lf.T
    G_beta = sym_solve(F_A, F_B, name="F_A") @ np.linalg.solve(inner, Lf @ D @ D)
    return H_f, G_beta


@dataclass(frozen=True)
class DrawErrors:
    factor: float  # RMS over t of ||F_hat_t - H_f f_t||
    coefficient: float  # ||beta_hat - G_beta beta_f||
    forecast: float  # RMS over t of |y_hat_t - E_t y_{t+h}|
    rotation: float  # max |H_f' G_beta - I|


def draw_errors(draw: SimDraw, f: Optional[K3prfFit] = None) -> DrawErrors:
    f = f or fit_draw(draw)
    H, G = compute_rotations(draw, f)
    fe = f.F_hat - draw.f @ H.T
    ce = f.beta_hat - G @ draw.beta[: draw.config.K_f]
    pe = f.fitted - draw.conditional_mean
    rot = np.abs(H.T @ G - np.eye(H.shape[1])).max()
    return DrawErrors(
        float(np.sqrt((fe * fe).sum(axis=1).mean())),
        float(np.linalg.norm(ce)),
        float(np.sqrt((pe * pe).mean())),
        float(rot),
    )


def poly2_arm(T: int = 60, N: int = 3, K: int = 1, noise: float = 0.1, seed: int = 0):
    """Raw-input arm: ``X`` from ``K`` latent factors, target quadratic in them.

    Returns ``(X, Phi_X, y, Z)`` where ``Phi_X`` is the explicit degree-2
    feature map of ``X`` (offset 1) and ``Z = y``.
    """
    rng = np.random.default_rng(seed)
    f = rng.standard_normal((T, K))
    A = rng.standard_normal((N, K))
    X = f @ A.T + noise * rng.standard_normal((T, N))
    y = (f**2).sum(axis=1) + f[:, 0] + noise * rng.standard_normal(T)
    return X, explicit_poly2_features(X, 1.0), y, y[:, None]


def check_poly2_arm(T: int = 60, N: int = 3, seed: int = 0) -> float:
    """Max abs gap between the kernel path and the explicit three passes on the raw arm."""
    X, Phi_X, y, Z = poly2_arm(T, N, seed=seed)
    k = fit(X, y, Z, KernelSpec.poly2(1.0)).fitted
    e = fit_explicit_passes(Phi_X, y, Z).fitted
    return float(np.abs(k - e).max())


@dataclass
class RateCurve:
    grid: List[Tuple[int, int]]
    delta: List[float]
    factor: List[float]
    coefficient: List[float]
    forecast: List[float]
    rotation: List[float]
    n_reps: int
    slopes: dict = field(default_factory=dict)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["schema_version", "M", "T", "delta_MT", "median_factor_err",
                        "median_coef_err", "median_forecast_err", "median_rotation_err", "n_reps"])
            for i, (M, T) in enumerate(self.grid):
                w.writerow([SCHEMA_VERSION, M, T, repr(self.delta[i]), repr(self.factor[i]),
                            repr(self.coefficient[i]), repr(self.forecast[i]), repr(self.rotation[i]), self.n_reps])
            for k, v in sorted(self.slopes.items()):
                w.writerow(["#", f"slope_{k}", repr(v)])


def loglog_slope(x, y) -> float:
    """Least-squares slope of ``log y`` on ``log x``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    if lx.size < 2:
        raise InvalidInputError("need at least two points for a slope")
    return float(np.polyfit(lx, ly, 1)[0])


def rate_study(
    grid: Sequence[Tuple[int, int]],
    n_reps: int = 100,
    base: Optional[SimConfig] = None,
    seed: int = 0,
    threads: int = 1,
) -> RateCurve:
    """Median errors over ``n_reps`` draws at every ``(M, T)`` grid point."""
    base = base or SimConfig()
    grid = [(int(M), int(T)) for M, T in grid]

    def one(args):
        gi, r = args
        M, T = grid[gi]
        cfg = replace(base, M=M, T=T)
        return draw_errors(simulate(cfg, np.random.default_rng([seed, gi, r])))

    jobs = [(gi, r) for gi in range(len(grid)) for r in range(n_reps)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            errs = list(ex.map(one, jobs))
    else:
        errs = [one(j) for j in jobs]

    med = {k: [] for k in ("factor", "coefficient", "forecast", "rotation")}
    for gi in range(len(grid)):
        chunk = errs[gi * n_reps : (gi + 1) * n_reps]
        for k in med:
            med[k].append(float(np.median([getattr(e, k) for e in chunk])))
    delta = [float(min(np.sqrt(M), np.sqrt(T))) for M, T in grid]
    curve = RateCurve(grid, delta, med["factor"], med["coefficient"], med["forecast"], med["rotation"], n_reps)
    if len(set(delta)) >= 2:
        curve.slopes = {k: loglog_slope(delta, med[k]) for k in ("factor", "coefficient", "forecast")}
    return curve


def adversarial_config(seed: int = 0) -> SimConfig:
    """One relevant factor and one irrelevant factor with much larger variance."""
    return SimConfig(
        T=200, M=100, K_f=1, K_g=1, factor_var=(1.0, 9.0),
        sigma_eps=1.0, sigma_eta=0.5, sigma_omega=0.5, seed=seed,
    )


def config_dict(config: SimConfig) -> dict:
    return asdict(config)


def long_horizon_panel(T: int = 300, N: int = 6, seed: int = 0, noise: float = 0.3, target_noise: float = 0.5):
    """Quarterly panel whose target is linear in one factor at short horizons
    and quadratic in another at long horizons.

    ``TARGET_t = f1_{t-1} + (f2_{t-12}^2 - 1) + noise``, so from period ``t``
    the predictable part of ``TARGET_{t+1}`` is linear in ``f1_t`` while that
    of ``TARGET_{t+12}`` is ``f2_t^2``. The first ``N/2`` predictors load on
    ``f1`` and the rest on ``f2``.
    """
    import pandas as pd

    rng = np.random.default_rng(seed)
    f = rng.standard_normal((T + 12, 2))
    A = np.zeros((N, 2))
    A[: N // 2, 0] = 1.0
    A[N // 2 :, 1] = 1.0
    A += 0.3 * rng.standard_normal((N, 2))
    X = f[12:] @ A.T + noise * rng.standard_normal((T, N))
    y = f[11:-1, 0] + (f[:-12, 1] ** 2 - 1.0) + target_noise * rng.standard_normal(T)
    idx = pd.period_range("1950Q1", periods=T, freq="Q").to_timestamp()
    df = pd.DataFrame(X, index=idx, columns=[f"X{i:02d}" for i in range(N)])
    df["TARGET"] = y
    df.index.name = "period"
    return df
