"""Daily GDU forecasting with a Gaussian process.

The covariance is a sum of an annual periodic kernel, a linear trend kernel,
a constant bias kernel and white noise. Time is measured in years of 365 days
(leap days are dropped on ingestion), so a shift by one calendar year is a
shift by exactly 1.0 and the periodic kernel sees the same calendar day.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from datetime import date, timedelta
from typing import Iterable, Optional

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize

from .core import DomainError

log = logging.getLogger(__name__)

EPOCH_YEAR = 2000
DAYS_PER_YEAR = 365
LOG_2PI = math.log(2.0 * math.pi)


class FitError(RuntimeError):
    pass


# -- calendar helpers -------------------------------------------------------

def is_leap_day(d: date) -> bool:
    return d.month == 2 and d.day == 29


def noleap_day_of_year(d: date) -> int:
    """0-based day of year on a 365-day calendar (Feb 29 has no slot)."""
    if is_leap_day(d):
        raise DomainError(f"{d} is a leap day")
    doy = d.timetuple().tm_yday - 1
    if d.month > 2 and _is_leap_year(d.year):
        doy -= 1
    return doy


def _is_leap_year(y: int) -> bool:
    return y % 4 == 0 and (y % 100 != 0 or y % 400 == 0)


def year_time(d: date) -> float:
    return (d.year - EPOCH_YEAR) + noleap_day_of_year(d) / DAYS_PER_YEAR


def noleap_dates(start: date, n: int) -> list:
    """``n`` consecutive calendar days from ``start``, skipping Feb 29."""
    if is_leap_day(start):
        start += timedelta(days=1)
    out = []
    d = start
    while len(out) < n:
        if not is_leap_day(d):
            out.append(d)
        d += timedelta(days=1)
    return out


# -- data types -------------------------------------------------------------

@dataclass(frozen=True)
class GduHistory:
    site_id: int
    dates: tuple
    values: np.ndarray
    dropped_leap_days: int = 0

    def __post_init__(self):
        if len(self.dates) != len(self.values):
            raise DomainError("dates and values differ in length")
        for a, b in zip(self.dates, self.dates[1:]):
            if not a < b:
                raise DomainError(f"history dates not strictly increasing at {b}")
        if any(is_leap_day(d) for d in self.dates):
            raise DomainError("history contains Feb 29 entries")
        values = np.asarray(self.values, dtype=np.float64)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_observations(cls, site_id: int, observations: Iterable) -> "GduHistory":
        """Build from ``(date, gdu)`` pairs, dropping leap days."""
        obs = sorted(observations, key=lambda p: p[0])
        kept = [(d, float(v)) for d, v in obs if not is_leap_day(d)]
        dropped = len(obs) - len(kept)
        if dropped:
            log.warning("site %s: dropped %d Feb 29 observations", site_id, dropped)
        return cls(site_id, tuple(d for d, _ in kept),
                   np.array([v for _, v in kept], dtype=np.float64), dropped)

    def __len__(self):
        return len(self.dates)

    def times(self) -> np.ndarray:
        return np.array([year_time(d) for d in self.dates])


@dataclass(frozen=True)
class KernelParams:
    periodic_variance: float
    periodic_lengthscale: float
    linear_variance: float
    bias_variance: float
    noise_variance: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (v > 0 and math.isfinite(v)):
                raise DomainError(f"{f.name} must be positive and finite, got {v}")

    def to_log(self) -> np.ndarray:
        return np.log([getattr(self, f.name) for f in fields(self)])

    @classmethod
    def from_log(cls, theta) -> "KernelParams":
        return cls(*(float(v) for v in np.exp(theta)))

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


PARAM_NAMES = tuple(f.name for f in fields(KernelParams))


@dataclass(frozen=True)
class GduForecast:
    horizon_start: date
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        std = np.asarray(self.std, dtype=np.float64)
        if mean.shape != std.shape or mean.ndim != 1:
            raise DomainError("forecast mean and std must be 1-d and equally long")
        if np.any(std < 0):
            raise DomainError("forecast std must be nonnegative")
        mean.setflags(write=False)
        std.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "std", std)

    @property
    def d_max(self) -> int:
        return len(self.mean)

    def dates(self) -> list:
        return noleap_dates(self.horizon_start, self.d_max)

    def mean_accumulation(self) -> np.ndarray:
        return np.maximum(self.mean, 0.0)


@dataclass(frozen=True)
class SearchConfig:
    """Hyperparameter search: multi-start Nelder-Mead in log space.

    Bounds are ``(low, high)`` pairs; ``None`` derives them from the data scale.
    """

    n_starts: int = 4
    max_iter: int = 400
    stride: int = 3
    seed: int = 0
    bounds: Optional[dict] = None
    jitter: float = 1e-10
    max_jitter: float = 1e-4

    def resolve_bounds(self, y: np.ndarray) -> dict:
        scale = float(np.mean(y ** 2)) or 1.0
        default = {
            "periodic_variance": (1e-6 * scale, 10.0 * scale),
            "periodic_lengthscale": (0.05, 20.0),
            "linear_variance": (1e-8 * scale, 10.0 * scale),
            "bias_variance": (1e-6 * scale, 10.0 * scale),
            "noise_variance": (1e-6 * scale, 10.0 * scale),
        }
        if self.bounds:
            unknown = set(self.bounds) - set(default)
            if unknown:
                raise DomainError(f"unknown kernel parameters in bounds: {sorted(unknown)}")
            default.update({k: tuple(v) for k, v in self.bounds.items()})
        for name, (lo, hi) in default.items():
            if not 0 < lo <= hi:
                raise DomainError(f"bounds for {name} must be positive and ordered")
        return default


# -- kernel -----------------------------------------------------------------

def _sin2(ta: np.ndarray, tb: np.ndarray) -> np.ndarray:
    return np.sin(np.pi * (ta[:, None] - tb[None, :])) ** 2


def kernel_matrix(params: KernelParams, ta, tb, center: float = 0.0,
                  add_noise: bool = False) -> np.ndarray:
    ta = np.asarray(ta, dtype=np.float64)
    tb = np.asarray(tb, dtype=np.float64)
    K = params.periodic_variance * np.exp(-2.0 * _sin2(ta, tb) / params.periodic_lengthscale ** 2)
    K += params.linear_variance * np.outer(ta - center, tb - center)
    K += params.bias_variance
    if add_noise:
        if K.shape[0] != K.shape[1]:
            raise DomainError("noise can only be added to a square Gram matrix")
        K[np.diag_indices_from(K)] += params.noise_variance
    return K


def _factor(K: np.ndarray, jitter: float, max_jitter: float):
    try:
        return cholesky(K, lower=True, check_finite=False), 0.0
    except np.linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(K)))
    eps = jitter
    while eps <= max_jitter:
        try:
            Kj = K + eps * scale * np.eye(len(K))
            return cholesky(Kj, lower=True, check_finite=False), eps * scale
        except np.linalg.LinAlgError:
            eps *= 10.0
    raise FitError("covariance matrix is not positive definite even with jitter")


def _lml_from_factor(L: np.ndarray, y: np.ndarray) -> float:
    alpha = cho_solve((L, True), y, check_finite=False)
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * len(y) * LOG_2PI)


class GPModel:
    """Fitted GP: kernel parameters plus the retained training factorization."""

    def __init__(self, params: KernelParams, t: np.ndarray, y: np.ndarray,
                 stride: int = 1, jitter: float = 1e-10, max_jitter: float = 1e-4):
        t = np.asarray(t, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if len(t) != len(y) or len(t) == 0:
            raise DomainError("training inputs and targets must be nonempty and aligned")
        self.params = params
        self.t = t
        self.y = y
        self.stride = stride
        self.center = 0.5 * (t.min() + t.max())
        K = kernel_matrix(params, t, t, self.center, add_noise=True)
        self.L, self.jitter_used = _factor(K, jitter, max_jitter)
        self.alpha = cho_solve((self.L, True), y, check_finite=False)
        self.lml = _lml_from_factor(self.L, y)

    @classmethod
    def from_history(cls, history: GduHistory, params: KernelParams, stride: int = 1,
                     **kw) -> "GPModel":
        t, y = training_data(history, stride)
        return cls(params, t, y, stride=stride, **kw)

    def log_marginal_likelihood(self) -> float:
        return self.lml

    def predict(self, t_new, include_noise: bool = True) -> tuple:
        t_new = np.asarray(t_new, dtype=np.float64)
        Ks = kernel_matrix(self.params, self.t, t_new, self.center)
        mean = Ks.T @ self.alpha
        v = solve_triangular(self.L, Ks, lower=True, check_finite=False)
        p = self.params
        prior = p.periodic_variance + p.linear_variance * (t_new - self.center) ** 2 \
            + p.bias_variance
        if include_noise:
            prior = prior + p.noise_variance
        var = np.maximum(prior - np.sum(v * v, axis=0), 0.0)
        return mean, np.sqrt(var)


def training_data(history: GduHistory, stride: int = 1) -> tuple:
    if len(history) == 0:
        raise DomainError("empty GDU history")
    if stride < 1:
        raise DomainError("stride must be at least 1")
    t = history.times()[::stride]
    y = np.asarray(history.values)[::stride]
    return t, y


def log_marginal_likelihood(model: GPModel, history: Optional[GduHistory] = None) -> float:
    """Gaussian log evidence of ``history`` (default: the model's own training set)."""
    if history is None:
        return model.lml
    t, y = training_data(history, model.stride)
    K = kernel_matrix(model.params, t, t, 0.5 * (t.min() + t.max()), add_noise=True)
    L, _ = _factor(K, 1e-10, 1e-4)
    return _lml_from_factor(L, y)


def fit_gpr(history: GduHistory, search: SearchConfig = SearchConfig()) -> GPModel:
    """Maximize the log marginal likelihood over the kernel parameters."""
    if len(history) < 2:
        raise DomainError("need at least two observations to fit")
    t, y = training_data(history, search.stride)
    if len(t) < 2:
        raise DomainError("stride leaves fewer than two training points")
    bounds = search.resolve_bounds(y)
    log_bounds = [(math.log(bounds[n][0]), math.log(bounds[n][1])) for n in PARAM_NAMES]
    center = 0.5 * (t.min() + t.max())
    # the expensive pieces of the Gram matrix do not depend on the parameters
    sin2 = _sin2(t, t)
    lin = np.outer(t - center, t - center)
    eye = np.eye(len(t))

    def neg_lml(theta):
        pv, ls, lv, bv, nv = np.exp(theta)
        K = pv * np.exp(-2.0 * sin2 / ls ** 2) + lv * lin + bv + nv * eye
        try:
            L = cholesky(K, lower=True, check_finite=False)
        except np.linalg.LinAlgError:
            return 1e25
        return -_lml_from_factor(L, y)

    rng = np.random.default_rng(search.seed)
    lo = np.array([b[0] for b in log_bounds])
    hi = np.array([b[1] for b in log_bounds])
    starts = [np.clip(_informed_start(y), lo, hi)]
    starts += [rng.uniform(lo, hi) for _ in range(max(search.n_starts - 1, 0))]

    best = None
    for k, x0 in enumerate(starts):
        res = minimize(neg_lml, x0, method="Nelder-Mead", bounds=log_bounds,
                       options={"maxiter": search.max_iter, "xatol": 1e-4, "fatol": 1e-6})
        log.debug("start %d: -lml=%.4f after %d evaluations", k, res.fun, res.nfev)
        if best is None or res.fun < best.fun:
            best = res
    if best is None or best.fun >= 1e25:
        raise FitError("no start produced a positive definite covariance")
    params = KernelParams.from_log(best.x)
    return GPModel(params, t, y, stride=search.stride, jitter=search.jitter,
                   max_jitter=search.max_jitter)


def _informed_start(y: np.ndarray) -> np.ndarray:
    var = float(np.var(y)) or 1.0
    mean_sq = float(np.mean(y)) ** 2 or var
    return np.log([0.5 * var, 1.0, 0.01 * var, mean_sq, 0.25 * var])


# -- forecasts --------------------------------------------------------------

def predict_forecast(model: GPModel, horizon_start: date, d_max: int) -> GduForecast:
    if d_max <= 0:
        raise DomainError(f"horizon length must be positive, got {d_max}")
    days = noleap_dates(horizon_start, d_max)
    mean, std = model.predict(np.array([year_time(d) for d in days]), include_noise=True)
    return GduForecast(days[0], mean, std)


def naive_forecast(history: GduHistory, horizon_start: date, d_max: int) -> GduForecast:
    """Across-year mean and sample std per calendar (month, day)."""
    if d_max <= 0:
        raise DomainError(f"horizon length must be positive, got {d_max}")
    groups: dict = {}
    for d, v in zip(history.dates, history.values):
        groups.setdefault((d.month, d.day), []).append(float(v))
    days = noleap_dates(horizon_start, d_max)
    mean = np.empty(d_max)
    std = np.empty(d_max)
    for k, d in enumerate(days):
        vals = groups.get((d.month, d.day), [])
        if len(vals) < 2:
            raise DomainError(
                f"calendar day {d.month:02d}-{d.day:02d} has {len(vals)} observations; need 2")
        arr = np.array(vals)
        dev = arr - arr[0]
        mean[k] = arr[0] + dev.mean()
        std[k] = dev.std(ddof=1)
    return GduForecast(days[0], mean, std)


def sample_accumulation(forecast: GduForecast, rng) -> np.ndarray:
    """One daily GDU realization: independent normal draws clipped at zero."""
    rng = np.random.default_rng(rng)
    return np.maximum(rng.normal(forecast.mean, forecast.std), 0.0)


@dataclass(frozen=True)
class Residual:
    time: float
    residual: float
    std: float


def residual_diagnostics(model: GPModel, history: Optional[GduHistory] = None) -> list:
    """Observed minus predictive mean at the training times, with predictive std."""
    if history is None:
        t, y = model.t, model.y
    else:
        t, y = training_data(history, model.stride)
    mean, std = model.predict(t, include_noise=True)
    return [Residual(float(a), float(b), float(c)) for a, b, c in zip(t, y - mean, std)]
