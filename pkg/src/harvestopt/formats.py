"""File formats for the command-line tools.

All day indices written to disk are 1-based; unreachable harvest days are
written as -1. Conversion to the 0-based in-memory convention happens only
here. Writers are atomic (write to a temporary file, then rename).
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .core import INVALID, DomainError, HarvestMatrix, Schedule, SpeciesRecord
from .forecast import GduForecast, GduHistory, noleap_dates

log = logging.getLogger(__name__)

HISTORY_FILE = "gdu_history.csv"
SPECIES_FILE = "species.csv"
SCENARIO_FILE = "scenario.json"
MANIFEST_FILE = "manifest.json"

HISTORY_COLUMNS = ("site", "date", "gdu")
SPECIES_COLUMNS = ("species_id", "site", "early_plant", "late_plant", "required_gdu", "yield",
                   "original_plant")
FORECAST_COLUMNS = ("day", "date", "mean", "std")
MATRIX_COLUMNS = ("species_id", "plant_day", "harvest_day")
SCHEDULE_COLUMNS = ("species_id", "plant_day", "harvest_day")
WEEKLY_COLUMNS = ("week", "yield_mean", "yield_std")
LOSS_HISTORY_COLUMNS = ("generation", "l_plus", "l_minus", "mutation_rate")


class FormatError(ValueError):
    """Malformed input file; the message names the file and line."""


# -- low level --------------------------------------------------------------

def atomic_write_text(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    atomic_write_text(path, buf.getvalue())


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


def write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc


def read_csv(path, required: Sequence[str]):
    """Yield ``(line_number, row_dict)``; checks the header first."""
    path = Path(path)
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise FormatError(f"{path}: {exc.strerror}") from exc
    with fh:
        reader = csv.DictReader(fh)
        missing = [c for c in required if c not in (reader.fieldnames or ())]
        if missing:
            raise FormatError(f"{path}:1: missing columns {missing}")
        for row in reader:
            if None in row or any(v is None for v in row.values()):
                raise FormatError(f"{path}:{reader.line_num}: wrong number of fields")
            yield reader.line_num, row


def _parse(path, line, column, text, conv):
    try:
        return conv(text.strip())
    except (ValueError, TypeError) as exc:
        raise FormatError(f"{path}:{line}: column {column!r}: cannot parse {text!r}") from exc


def _float(s: str) -> float:
    v = float(s)
    if not np.isfinite(v):
        raise ValueError("non-finite value")
    return v


# -- day index conversion ---------------------------------------------------

def day_to_file(day: int) -> int:
    return -1 if day == INVALID else int(day) + 1


def day_from_file(value) -> int:
    value = int(value)
    if value == -1:
        return INVALID
    if value < 1:
        raise ValueError(f"day index {value} must be >= 1 or -1")
    return value - 1


class DayParser:
    """Accepts 1-based integer offsets or ISO dates relative to the horizon."""

    def __init__(self, horizon_start: Optional[date] = None, d_max: Optional[int] = None):
        self.index = {}
        if horizon_start is not None and d_max is not None:
            self.index = {d: k for k, d in enumerate(noleap_dates(horizon_start, d_max))}

    def __call__(self, text: str) -> int:
        text = text.strip()
        if "-" in text[1:]:
            d = date.fromisoformat(text)
            if d not in self.index:
                raise ValueError(f"date {text} is outside the horizon or a leap day")
            return self.index[d]
        return day_from_file(text)


# -- histories --------------------------------------------------------------

def write_history_csv(path, histories: Sequence[GduHistory]):
    rows = ((h.site_id, d.isoformat(), float(v))
            for h in histories for d, v in zip(h.dates, h.values))
    write_csv(path, HISTORY_COLUMNS, rows)


def read_history_csv(path) -> dict:
    """Histories keyed by site; Feb 29 rows are dropped with a warning."""
    by_site: dict = {}
    seen: dict = {}
    for line, row in read_csv(path, HISTORY_COLUMNS):
        site = _parse(path, line, "site", row["site"], int)
        d = _parse(path, line, "date", row["date"], date.fromisoformat)
        v = _parse(path, line, "gdu", row["gdu"], _float)
        if (site, d) in seen:
            raise FormatError(f"{path}:{line}: duplicate date {d} for site {site} "
                              f"(first at line {seen[site, d]})")
        seen[site, d] = line
        by_site.setdefault(site, []).append((d, v))
    out = {}
    for site, obs in sorted(by_site.items()):
        out[site] = GduHistory.from_observations(site, obs)
    return out


# -- species ----------------------------------------------------------------

def write_species_csv(path, species: Sequence[SpeciesRecord]):
    rows = ((s.species_id, s.site_id, day_to_file(s.d_early), day_to_file(s.d_late),
             float(s.g_harvest), float(s.yield_q),
             "" if s.original_plant is None else day_to_file(s.original_plant))
            for s in species)
    write_csv(path, SPECIES_COLUMNS, rows)


def read_species_csv(path, horizon_start: Optional[date] = None,
                     d_max: Optional[int] = None) -> dict:
    """Species records keyed by site, in file order; invariants checked per row."""
    day = DayParser(horizon_start, d_max)
    out: dict = {}
    ids = set()
    for line, row in read_csv(path, SPECIES_COLUMNS):
        sid = row["species_id"].strip()
        if not sid:
            raise FormatError(f"{path}:{line}: empty species_id")
        if sid in ids:
            raise FormatError(f"{path}:{line}: duplicate species_id {sid!r}")
        ids.add(sid)
        orig_text = row["original_plant"].strip()
        original = None if orig_text in ("", "-1") else \
            _parse(path, line, "original_plant", orig_text, day)
        early = _parse(path, line, "early_plant", row["early_plant"], day)
        late = _parse(path, line, "late_plant", row["late_plant"], day)
        if INVALID in (early, late):
            raise FormatError(f"{path}:{line}: planting window bounds cannot be -1")
        if d_max is not None and late >= d_max:
            raise FormatError(f"{path}:{line}: late_plant beyond the {d_max}-day horizon")
        try:
            rec = SpeciesRecord(
                species_id=sid,
                site_id=_parse(path, line, "site", row["site"], int),
                d_early=early,
                d_late=late,
                g_harvest=_parse(path, line, "required_gdu", row["required_gdu"], _float),
                yield_q=_parse(path, line, "yield", row["yield"], _float),
                original_plant=original,
            )
        except DomainError as exc:
            raise FormatError(f"{path}:{line}: {exc}") from exc
        out.setdefault(rec.site_id, []).append(rec)
    return out


# -- scenario ---------------------------------------------------------------

@dataclass
class ScenarioFile:
    horizon_start: date
    d_max: int
    capacities: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)


def read_scenario(path) -> ScenarioFile:
    raw = read_json(path)
    try:
        horizon_start = date.fromisoformat(raw["horizon_start"])
        d_max = int(raw["d_max"])
        caps = {int(s["site"]): float(s["capacity_s1"]) for s in raw.get("sites", [])}
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{path}: invalid scenario file: {exc!r}") from exc
    if d_max <= 0:
        raise FormatError(f"{path}: d_max must be positive")
    return ScenarioFile(horizon_start, d_max, caps, raw)


@dataclass
class Dataset:
    histories: dict
    species: dict
    scenario: ScenarioFile
    dropped_leap_days: int = 0


def ingest_dataset(data_dir) -> Dataset:
    data_dir = Path(data_dir)
    scenario = read_scenario(data_dir / SCENARIO_FILE)
    histories = read_history_csv(data_dir / HISTORY_FILE)
    species = read_species_csv(data_dir / SPECIES_FILE, scenario.horizon_start, scenario.d_max)
    dropped = sum(h.dropped_leap_days for h in histories.values())
    return Dataset(histories, species, scenario, dropped)


# -- forecasts, matrices, schedules -----------------------------------------

def write_forecast_csv(path, forecast: GduForecast):
    rows = ((k + 1, d.isoformat(), float(m), float(s))
            for k, (d, m, s) in enumerate(zip(forecast.dates(), forecast.mean, forecast.std)))
    write_csv(path, FORECAST_COLUMNS, rows)


def read_forecast_csv(path) -> GduForecast:
    days, dates, mean, std = [], [], [], []
    for line, row in read_csv(path, FORECAST_COLUMNS):
        days.append(_parse(path, line, "day", row["day"], int))
        dates.append(_parse(path, line, "date", row["date"], date.fromisoformat))
        mean.append(_parse(path, line, "mean", row["mean"], _float))
        s = _parse(path, line, "std", row["std"], _float)
        if s < 0:
            raise FormatError(f"{path}:{line}: negative std")
        std.append(s)
    if not days:
        raise FormatError(f"{path}: empty forecast")
    if days != list(range(1, len(days) + 1)):
        raise FormatError(f"{path}: day column must run 1..{len(days)}")
    if dates != noleap_dates(dates[0], len(dates)):
        raise FormatError(f"{path}: dates must be consecutive days without Feb 29")
    return GduForecast(dates[0], np.array(mean), np.array(std))


def write_matrix_csv(path, H: HarvestMatrix, species: Sequence[SpeciesRecord]):
    def rows():
        for i, s in enumerate(species):
            for j in range(s.d_early, s.d_late + 1):
                yield s.species_id, day_to_file(j), day_to_file(int(H.entries[i, j]))
    write_csv(path, MATRIX_COLUMNS, rows())


def read_matrix_csv(path, species: Sequence[SpeciesRecord], d_max: int) -> HarvestMatrix:
    row_of = {s.species_id: i for i, s in enumerate(species)}
    entries = np.full((len(species), d_max), INVALID, dtype=np.int64)
    filled = np.zeros((len(species), d_max), dtype=bool)
    for line, row in read_csv(path, MATRIX_COLUMNS):
        sid = row["species_id"].strip()
        if sid not in row_of:
            raise FormatError(f"{path}:{line}: unknown species {sid!r}")
        i = row_of[sid]
        j = _parse(path, line, "plant_day", row["plant_day"], day_from_file)
        h = _parse(path, line, "harvest_day", row["harvest_day"], day_from_file)
        s = species[i]
        if j == INVALID or not s.d_early <= j <= s.d_late:
            raise FormatError(f"{path}:{line}: plant_day outside the window of {sid}")
        if h != INVALID and not j <= h < d_max:
            raise FormatError(f"{path}:{line}: harvest_day out of range")
        entries[i, j] = h
        filled[i, j] = True
    for i, s in enumerate(species):
        if not filled[i, s.d_early:s.d_late + 1].all():
            raise FormatError(f"{path}: incomplete rows for species {s.species_id}")
    return HarvestMatrix(entries, tuple(s.species_id for s in species))


def write_schedule_csv(path, schedule: Schedule, H: HarvestMatrix,
                       species: Sequence[SpeciesRecord]):
    rows = ((s.species_id, day_to_file(int(p)), day_to_file(int(H.entries[i, p])))
            for i, (s, p) in enumerate(zip(species, schedule.plant_day)))
    write_csv(path, SCHEDULE_COLUMNS, rows)


def read_schedule_csv(path, species: Sequence[SpeciesRecord]) -> Schedule:
    plant = {}
    for line, row in read_csv(path, SCHEDULE_COLUMNS):
        sid = row["species_id"].strip()
        p = _parse(path, line, "plant_day", row["plant_day"], day_from_file)
        if p == INVALID:
            raise FormatError(f"{path}:{line}: plant_day cannot be -1")
        plant[sid] = p
    missing = [s.species_id for s in species if s.species_id not in plant]
    if missing:
        raise FormatError(f"{path}: no planting day for {len(missing)} species, e.g. {missing[0]}")
    return Schedule([plant[s.species_id] for s in species])


def write_weekly_csv(path, mean, std):
    write_csv(path, WEEKLY_COLUMNS,
              ((w + 1, float(m), float(s)) for w, (m, s) in enumerate(zip(mean, std))))


def read_weekly_csv(path) -> tuple:
    mean, std = [], []
    for line, row in read_csv(path, WEEKLY_COLUMNS):
        mean.append(_parse(path, line, "yield_mean", row["yield_mean"], _float))
        std.append(_parse(path, line, "yield_std", row["yield_std"], _float))
    return np.array(mean), np.array(std)


def write_loss_history_csv(path, history):
    write_csv(path, LOSS_HISTORY_COLUMNS,
              ((r.generation, float(r.l_plus), float(r.l_minus), float(r.mutation_rate))
               for r in history))


def read_loss_history_csv(path) -> list:
    out = []
    for line, row in read_csv(path, LOSS_HISTORY_COLUMNS):
        out.append((_parse(path, line, "generation", row["generation"], int),
                    _parse(path, line, "l_plus", row["l_plus"], _float),
                    _parse(path, line, "l_minus", row["l_minus"], _float),
                    _parse(path, line, "mutation_rate", row["mutation_rate"], _float)))
    return out
