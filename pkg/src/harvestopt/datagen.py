"""Synthetic two-site dataset shaped like the crop-challenge data.

Site 0 has planting windows clustered around February and May; site 1 has a
broad, smooth window distribution. Daily GDU follows an annual sinusoid with a
small linear trend and Gaussian day-to-day noise.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import INVALID, SpeciesRecord, compute_harvest_date
from .forecast import GduHistory, noleap_dates, noleap_day_of_year

log = logging.getLogger(__name__)

BIMODAL = "bimodal"
SMOOTH = "smooth"


class GenerationError(RuntimeError):
    pass


@dataclass(frozen=True)
class SiteProfile:
    site_id: int
    n_species: int
    capacity_s1: float
    window_mode: str = SMOOTH
    gdu_base_level: float = 12.0
    gdu_base_amplitude: float = 11.0
    gdu_trend_per_year: float = 0.05
    gdu_noise_std: float = 2.5
    # calendar day (0-based, 365-day year) of the seasonal GDU peak
    gdu_peak_day: int = 200
    window_width: tuple = (14, 60)
    growth_days: tuple = (230, 290)

    def __post_init__(self):
        if self.n_species <= 0:
            raise ValueError("n_species must be positive")
        if self.gdu_noise_std < 0:
            raise ValueError("noise std must be nonnegative")
        if self.window_mode not in (BIMODAL, SMOOTH):
            raise ValueError(f"unknown window mode {self.window_mode!r}")


@dataclass(frozen=True)
class YieldSpec:
    mean: float
    std: float

    def __post_init__(self):
        if self.std < 0:
            raise ValueError("yield std must be nonnegative")
        if self.mean <= 0 and self.std == 0:
            raise ValueError("a degenerate yield distribution must have a positive mean")


SITE0 = SiteProfile(0, 1375, 7000.0, BIMODAL, gdu_noise_std=2.5)
SITE1 = SiteProfile(1, 1194, 6000.0, SMOOTH, gdu_base_level=11.0,
                    gdu_base_amplitude=10.0, gdu_noise_std=3.5)
YIELD_S1 = YieldSpec(250.0, 100.0)
YIELD_S2 = YieldSpec(350.0, 150.0)


def seasonal_gdu(profile: SiteProfile, dates: Sequence[date], trend_origin_year: int) -> np.ndarray:
    """Noise-free daily GDU for the given dates (before clipping)."""
    doy = np.array([noleap_day_of_year(d) for d in dates], dtype=np.float64)
    years = np.array([d.year - trend_origin_year for d in dates], dtype=np.float64)
    phase = 2.0 * np.pi * (doy - profile.gdu_peak_day) / 365.0
    return (profile.gdu_base_level + profile.gdu_base_amplitude * np.cos(phase)
            + profile.gdu_trend_per_year * (years + doy / 365.0))


def gen_gdu_history(profile: SiteProfile, start_year: int, end_year: int,
                    rng: np.random.Generator) -> GduHistory:
    if start_year > end_year:
        raise ValueError("start_year must not exceed end_year")
    n_days = (end_year - start_year + 1) * 365
    dates = noleap_dates(date(start_year, 1, 1), n_days)
    values = seasonal_gdu(profile, dates, start_year)
    values = values + rng.normal(0.0, profile.gdu_noise_std, n_days)
    return GduHistory(profile.site_id, tuple(dates), np.maximum(values, 0.0))


def reference_accumulation(profile: SiteProfile, horizon_start: date, d_max: int,
                           trend_origin_year: int) -> np.ndarray:
    """Expected (noise-free) daily GDU over the optimization horizon."""
    dates = noleap_dates(horizon_start, d_max)
    return np.maximum(seasonal_gdu(profile, dates, trend_origin_year), 0.0)


def _window_center(profile: SiteProfile, rng: np.random.Generator) -> float:
    if profile.window_mode == BIMODAL:
        # mid February or mid May
        mode = 45.0 if rng.random() < 0.5 else 135.0
        return rng.normal(mode, 10.0)
    return rng.uniform(30.0, 170.0)


def _positive_normal(spec: YieldSpec, rng: np.random.Generator) -> float:
    for _ in range(10_000):
        v = rng.normal(spec.mean, spec.std)
        if v > 0:
            return float(v)
    raise GenerationError(f"could not draw a positive yield from N({spec.mean}, {spec.std})")


def gen_species_table(profile: SiteProfile, yields: YieldSpec, d_max: int,
                      g_acc_reference, rng: np.random.Generator,
                      max_attempts: int = 200) -> list:
    g_ref = np.asarray(g_acc_reference, dtype=np.float64)
    if len(g_ref) != d_max:
        raise GenerationError("reference accumulation does not match the horizon")
    lo_w, hi_w = profile.window_width
    lo_g, hi_g = profile.growth_days
    records = []
    for i in range(profile.n_species):
        for _ in range(max_attempts):
            width = int(rng.integers(lo_w, hi_w + 1))
            early = int(round(_window_center(profile, rng))) - width // 2
            late = early + width - 1
            if early < 0 or late >= d_max:
                continue
            mid = (early + late) // 2
            days = int(rng.integers(lo_g, hi_g + 1))
            if mid + days > d_max:
                continue
            g_harvest = float(np.sum(g_ref[mid:mid + days]))
            if compute_harvest_date(g_ref, g_harvest, late) != INVALID:
                break
        else:
            raise GenerationError(
                f"site {profile.site_id}: no feasible window for species {i} "
                f"within a {d_max}-day horizon")
        records.append(SpeciesRecord(
            species_id=f"s{profile.site_id}_{i:04d}",
            site_id=profile.site_id,
            d_early=early,
            d_late=late,
            g_harvest=g_harvest,
            yield_q=_positive_normal(yields, rng),
            original_plant=int(rng.integers(early, late + 1)),
        ))
    return records


@dataclass
class DatagenConfig:
    seed: int = 0
    profiles: tuple = (SITE0, SITE1)
    yields: YieldSpec = YIELD_S1
    start_year: int = 2009
    end_year: int = 2019
    horizon_start: date = date(2020, 1, 1)
    d_max: int = 730

    def to_dict(self) -> dict:
        return {
            "seed": self.seed,
            "profiles": [asdict(p) for p in self.profiles],
            "yields": asdict(self.yields),
            "start_year": self.start_year,
            "end_year": self.end_year,
            "horizon_start": self.horizon_start.isoformat(),
            "d_max": self.d_max,
        }


@dataclass
class Bundle:
    histories: dict
    species: dict
    references: dict = field(default_factory=dict)


def gen_dataset(config: DatagenConfig) -> Bundle:
    """Histories and species tables for every site, one seeded stream per site."""
    streams = np.random.SeedSequence(config.seed).spawn(len(config.profiles))
    histories, species, refs = {}, {}, {}
    for profile, ss in zip(config.profiles, streams):
        hist_ss, species_ss = ss.spawn(2)
        histories[profile.site_id] = gen_gdu_history(
            profile, config.start_year, config.end_year, np.random.default_rng(hist_ss))
        ref = reference_accumulation(profile, config.horizon_start, config.d_max,
                                     config.start_year)
        refs[profile.site_id] = ref
        species[profile.site_id] = gen_species_table(
            profile, config.yields, config.d_max, ref, np.random.default_rng(species_ss))
    return Bundle(histories, species, refs)


def gen_dataset_bundle(config: DatagenConfig, out_dir) -> Path:
    """Write gdu_history.csv, species.csv, scenario.json and manifest.json."""
    from . import formats

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = gen_dataset(config)
    formats.write_history_csv(out / formats.HISTORY_FILE, list(bundle.histories.values()))
    all_species = [s for site in bundle.species.values() for s in site]
    formats.write_species_csv(out / formats.SPECIES_FILE, all_species)
    scenario = {
        "horizon_start": config.horizon_start.isoformat(),
        "d_max": config.d_max,
        "sites": [{"site": p.site_id, "n_species": p.n_species, "capacity_s1": p.capacity_s1}
                  for p in config.profiles],
        "yields": asdict(config.yields),
    }
    formats.write_json(out / formats.SCENARIO_FILE, scenario)
    formats.write_json(out / formats.MANIFEST_FILE, {
        "generator": "harvestopt.datagen",
        "config": config.to_dict(),
    })
    log.info("wrote dataset bundle with %d species to %s", len(all_species), out)
    return out
