"""Harvest-date math: planting windows, harvest matrix, week mappings and
weekly yield aggregation.

Day indices are 0-based offsets into the optimization horizon. Unreachable or
inadmissible harvest dates are marked with :data:`INVALID`, which is chosen so
that accidentally using it as an array index raises instead of silently
wrapping around like ``-1`` would.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

INVALID = int(np.iinfo(np.int64).min)

ONE_SHOT = "one-shot"
CYCLIC = "cyclic"
WEEKS_PER_YEAR = 52


class DomainError(ValueError):
    """Raised when an input lies outside the domain of an operation."""


@dataclass(frozen=True)
class SpeciesRecord:
    species_id: str
    site_id: int
    d_early: int
    d_late: int
    g_harvest: float
    yield_q: float
    original_plant: Optional[int] = None

    def __post_init__(self):
        if self.d_early < 0 or self.d_early > self.d_late:
            raise DomainError(
                f"species {self.species_id}: invalid window [{self.d_early}, {self.d_late}]")
        if not self.g_harvest >= 0:
            raise DomainError(f"species {self.species_id}: negative required GDU")
        if not self.yield_q >= 0:
            raise DomainError(f"species {self.species_id}: negative yield")
        if self.original_plant is not None and not (
                self.d_early <= self.original_plant <= self.d_late):
            raise DomainError(
                f"species {self.species_id}: original planting day outside window")

    @property
    def width(self) -> int:
        return self.d_late - self.d_early + 1


@dataclass(frozen=True)
class HarvestMatrix:
    """Harvest day per species (rows) and planting day (columns)."""

    entries: np.ndarray
    species_order: tuple

    def __post_init__(self):
        self.entries.setflags(write=False)

    @property
    def d_max(self) -> int:
        return self.entries.shape[1]

    def __getitem__(self, key):
        return self.entries[key]


@dataclass(frozen=True)
class WeekMapping:
    kind: str
    delta: int
    n_weeks: int
    table: np.ndarray

    def __post_init__(self):
        self.table.setflags(write=False)

    @property
    def d_max(self) -> int:
        return len(self.table)

    def week_of(self, days) -> np.ndarray:
        """Map days to weeks; INVALID days map to INVALID."""
        days = np.asarray(days, dtype=np.int64)
        valid = days != INVALID
        out = np.full(days.shape, INVALID, dtype=np.int64)
        out[valid] = self.table[days[valid]]
        return out

    def binary_matrix(self) -> np.ndarray:
        m = np.zeros((self.d_max, self.n_weeks), dtype=np.int8)
        m[np.arange(self.d_max), self.table] = 1
        return m


@dataclass(frozen=True)
class Schedule:
    plant_day: np.ndarray

    def __post_init__(self):
        arr = np.array(self.plant_day, dtype=np.int64)
        arr.setflags(write=False)
        object.__setattr__(self, "plant_day", arr)

    def __len__(self):
        return len(self.plant_day)

    def __eq__(self, other):
        return isinstance(other, Schedule) and np.array_equal(self.plant_day, other.plant_day)

    def __hash__(self):
        return hash(self.plant_day.tobytes())


@dataclass(frozen=True)
class WeeklyYield:
    per_week: np.ndarray
    invalid_species: tuple = field(default=())

    @property
    def n_weeks(self) -> int:
        return len(self.per_week)

    def total(self) -> float:
        return float(self.per_week.sum())


def _as_accumulation(g_acc) -> np.ndarray:
    arr = np.asarray(g_acc, dtype=np.float64)
    if arr.ndim != 1 or len(arr) == 0:
        raise DomainError("GDU accumulation must be a nonempty 1-d sequence")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise DomainError("daily GDU values must be finite and nonnegative")
    return arr


def compute_harvest_date(g_acc, g_harvest: float, d_plant: int) -> int:
    """First day whose GDU sum since planting reaches ``g_harvest``.

    Returns INVALID when the requirement is not met before the horizon ends.
    """
    if d_plant == INVALID or d_plant < 0:
        raise DomainError(f"invalid planting day {d_plant}")
    if not g_harvest >= 0:
        raise DomainError(f"required GDU must be nonnegative, got {g_harvest}")
    g_acc = _as_accumulation(g_acc)
    if d_plant >= len(g_acc):
        raise DomainError(f"planting day {d_plant} beyond horizon {len(g_acc)}")
    # cumsum adds sequentially, so this matches a running-sum scan bit for bit
    partial = np.cumsum(g_acc[d_plant:])
    k = int(np.searchsorted(partial, g_harvest, side="left"))
    if k >= len(partial):
        return INVALID
    return d_plant + k


def build_harvest_matrix(g_acc, species: Sequence[SpeciesRecord]) -> HarvestMatrix:
    g_acc = _as_accumulation(g_acc)
    d_max = len(g_acc)
    n = len(species)
    early = np.array([s.d_early for s in species], dtype=np.int64)
    late = np.array([s.d_late for s in species], dtype=np.int64)
    need = np.array([s.g_harvest for s in species], dtype=np.float64)
    if n and late.max() >= d_max:
        bad = species[int(np.argmax(late))].species_id
        raise DomainError(f"species {bad}: planting window exceeds horizon of {d_max} days")

    entries = np.full((n, d_max), INVALID, dtype=np.int64)
    if n == 0:
        return HarvestMatrix(entries, ())
    for j in range(int(early.min()), int(late.max()) + 1):
        rows = np.flatnonzero((early <= j) & (j <= late))
        if len(rows) == 0:
            continue
        partial = np.cumsum(g_acc[j:])
        k = np.searchsorted(partial, need[rows], side="left")
        entries[rows, j] = np.where(k < len(partial), j + k, INVALID)
    return HarvestMatrix(entries, tuple(s.species_id for s in species))


def build_week_mapping(d_max: int, delta: int = 0, kind: str = ONE_SHOT) -> WeekMapping:
    if d_max <= 0:
        raise DomainError(f"horizon length must be positive, got {d_max}")
    if delta < 0:
        raise DomainError(f"week offset must be nonnegative, got {delta}")
    weeks = (np.arange(d_max, dtype=np.int64) + delta) // 7
    if kind == ONE_SHOT:
        n_weeks = (d_max - 1 + delta) // 7 + 1
    elif kind == CYCLIC:
        weeks %= WEEKS_PER_YEAR
        n_weeks = WEEKS_PER_YEAR
    else:
        raise DomainError(f"unknown week mapping kind {kind!r}")
    return WeekMapping(kind, delta, n_weeks, weeks)


def day_resolution_mapping(d_max: int) -> WeekMapping:
    """Identity mapping: every day is its own bucket."""
    if d_max <= 0:
        raise DomainError(f"horizon length must be positive, got {d_max}")
    return WeekMapping("daily", 0, d_max, np.arange(d_max, dtype=np.int64))


def validate_schedule(schedule: Schedule, species: Sequence[SpeciesRecord]) -> list:
    """Indices whose planting day lies outside the species window."""
    if len(schedule) != len(species):
        raise DomainError(
            f"schedule has {len(schedule)} entries but there are {len(species)} species")
    early = np.array([s.d_early for s in species], dtype=np.int64)
    late = np.array([s.d_late for s in species], dtype=np.int64)
    plant = schedule.plant_day
    return [int(i) for i in np.flatnonzero((plant < early) | (plant > late))]


def original_schedule(species: Sequence[SpeciesRecord]) -> Schedule:
    missing = [s.species_id for s in species if s.original_plant is None]
    if missing:
        raise DomainError(f"{len(missing)} species lack an original planting day")
    return Schedule([s.original_plant for s in species])


def aggregate_weeks(harvest_weeks: np.ndarray, yields: np.ndarray, n_weeks: int) -> np.ndarray:
    """Sum yields per week; entries equal to ``n_weeks`` (the overflow bin) are dropped."""
    return np.bincount(harvest_weeks, weights=yields, minlength=n_weeks + 1)[:n_weeks]


def weekly_yield(schedule: Schedule, H: HarvestMatrix, species: Sequence[SpeciesRecord],
                 W: WeekMapping) -> WeeklyYield:
    violations = validate_schedule(schedule, species)
    if violations:
        raise DomainError(f"schedule violates planting windows at indices {violations[:10]}")
    if H.entries.shape[0] != len(species):
        raise DomainError("harvest matrix rows do not match species")
    n = len(species)
    harvest = H.entries[np.arange(n), schedule.plant_day]
    valid = harvest != INVALID
    weeks = np.full(n, W.n_weeks, dtype=np.int64)
    weeks[valid] = W.table[harvest[valid]]
    q = np.array([s.yield_q for s in species], dtype=np.float64)
    invalid = tuple(species[i].species_id for i in np.flatnonzero(~valid))
    return WeeklyYield(aggregate_weeks(weeks, q, W.n_weeks), invalid)


class HarvestProblem:
    """Array view of one optimization instance, shared by every optimizer.

    ``harvest_week[i, j]`` is the week of species ``i`` harvested after planting
    on day ``j``; inadmissible or unreachable entries hold ``n_weeks`` so that
    :func:`aggregate_weeks` discards them.
    """

    def __init__(self, H: HarvestMatrix, species: Sequence[SpeciesRecord], W: WeekMapping):
        if H.entries.shape[0] != len(species):
            raise DomainError("harvest matrix rows do not match species")
        if tuple(s.species_id for s in species) != H.species_order:
            raise DomainError("harvest matrix row order differs from species order")
        if W.d_max < H.d_max:
            raise DomainError("week mapping shorter than harvest matrix horizon")
        if len(species) == 0:
            raise DomainError("empty species set")
        self.H = H
        self.species = tuple(species)
        self.W = W
        self.n = len(species)
        self.n_weeks = W.n_weeks
        self.low = np.array([s.d_early for s in species], dtype=np.int64)
        self.high = np.array([s.d_late for s in species], dtype=np.int64)
        self.width = self.high - self.low + 1
        self.yields = np.array([s.yield_q for s in species], dtype=np.float64)
        self.total_yield = float(self.yields.sum())
        valid = H.entries != INVALID
        hw = np.full(H.entries.shape, self.n_weeks, dtype=np.int64)
        hw[valid] = W.table[H.entries[valid]]
        self.harvest_week = hw
        self._rows = np.arange(self.n)
        self.n_possible_weeks = int(len(np.unique(hw[valid]))) if valid.any() else 0

    def weeks_of(self, plant: np.ndarray) -> np.ndarray:
        return self.harvest_week[self._rows, plant]

    def weekly(self, plant: np.ndarray) -> np.ndarray:
        return aggregate_weeks(self.weeks_of(plant), self.yields, self.n_weeks)

    def is_valid(self, plant: np.ndarray) -> bool:
        return bool(np.all((plant >= self.low) & (plant <= self.high)))
