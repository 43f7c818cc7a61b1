"""Schedule evaluation under forecast uncertainty and the report metrics."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .core import (DomainError, Schedule, SpeciesRecord, WeekMapping, WeeklyYield,
                   build_harvest_matrix, weekly_yield)
from .forecast import GduForecast, sample_accumulation

# marker for a reduction ratio whose reference quantity is zero while the
# optimized one is not
UNDEFINED = None


@dataclass(frozen=True)
class EvalReport:
    c_target: float
    c_need: float
    overshoot_opt: float
    undershoot_opt: float
    overshoot_ref: float
    undershoot_ref: float
    r_o: Optional[float]
    r_u: Optional[float]
    weekly_mean: tuple
    weekly_std: tuple
    n_bootstrap: int

    def as_dict(self) -> dict:
        return asdict(self)


def _values(weekly) -> np.ndarray:
    if isinstance(weekly, WeeklyYield):
        return weekly.per_week
    return np.asarray(weekly, dtype=np.float64)


def overshoot_undershoot(weekly, C: float) -> tuple:
    """Summed excess above ``C`` and summed deficit on non-empty weeks below ``C``."""
    if not C > 0:
        raise DomainError(f"capacity must be positive, got {C}")
    h = _values(weekly)
    over = float(np.sum(np.maximum(h - C, 0.0)))
    partial = (h > 0) & (h < C)
    under = float(np.sum(C - h[partial]))
    return over, under


def _ratio(opt: float, ref: float) -> Optional[float]:
    if ref > 0:
        return 1.0 - opt / ref
    return 1.0 if opt == 0 else UNDEFINED


def reduction_ratios(opt, ref, C: float) -> tuple:
    o_opt, u_opt = overshoot_undershoot(opt, C)
    o_ref, u_ref = overshoot_undershoot(ref, C)
    return _ratio(o_opt, o_ref), _ratio(u_opt, u_ref)


def c_need(weekly) -> float:
    h = _values(weekly)
    return float(h.max()) if h.size else 0.0


def bootstrap_weekly_stats(schedule: Schedule, forecast: GduForecast,
                           species: Sequence[SpeciesRecord], W: WeekMapping,
                           n_samples: int, rng) -> tuple:
    """Per-week mean and sample std of the yield over resampled harvest matrices.

    Each sample owns a child stream spawned from ``rng`` so results do not
    depend on the order in which samples are processed.
    """
    if n_samples < 1:
        raise DomainError("need at least one bootstrap sample")
    streams = _spawn(rng, n_samples)
    samples = np.empty((n_samples, W.n_weeks))
    for k, stream in enumerate(streams):
        g_acc = sample_accumulation(forecast, stream)
        H = build_harvest_matrix(g_acc, species)
        samples[k] = weekly_yield(schedule, H, species, W).per_week
    # shifting by the first sample keeps identical samples at exactly zero spread
    dev = samples - samples[0]
    mean = samples[0] + dev.mean(axis=0)
    if n_samples == 1:
        std = np.zeros(W.n_weeks)
    else:
        std = dev.std(axis=0, ddof=1)
    return mean, std


def _spawn(rng, n: int) -> list:
    if isinstance(rng, np.random.Generator):
        return rng.spawn(n)
    return [np.random.default_rng(s) for s in np.random.SeedSequence(rng).spawn(n)]


def evaluate_schedule(schedule: Schedule, reference: Schedule, forecast: GduForecast,
                      species: Sequence[SpeciesRecord], W: WeekMapping, C: float,
                      n_bootstrap: int = 100, rng=0) -> EvalReport:
    """Compare ``schedule`` against ``reference`` under the mean accumulation,
    and attach bootstrap error bars for the optimized schedule."""
    g_mean = forecast.mean_accumulation()
    H = build_harvest_matrix(g_mean, species)
    opt = weekly_yield(schedule, H, species, W)
    ref = weekly_yield(reference, H, species, W)
    o_opt, u_opt = overshoot_undershoot(opt, C)
    o_ref, u_ref = overshoot_undershoot(ref, C)
    mean, std = bootstrap_weekly_stats(schedule, forecast, species, W, n_bootstrap, rng)
    return EvalReport(
        c_target=float(C),
        c_need=c_need(opt),
        overshoot_opt=o_opt,
        undershoot_opt=u_opt,
        overshoot_ref=o_ref,
        undershoot_ref=u_ref,
        r_o=_ratio(o_opt, o_ref),
        r_u=_ratio(u_opt, u_ref),
        weekly_mean=tuple(float(x) for x in mean),
        weekly_std=tuple(float(x) for x in std),
        n_bootstrap=n_bootstrap,
    )


def relative_overshoot(report: EvalReport) -> float:
    """Peak weekly excess relative to the target capacity (0 when never exceeded)."""
    if report.c_need <= report.c_target:
        return 0.0
    return (report.c_need - report.c_target) / report.c_target


def is_defined(ratio) -> bool:
    return ratio is not UNDEFINED and not (isinstance(ratio, float) and math.isnan(ratio))
