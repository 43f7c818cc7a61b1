"""(1+1) evolution strategy over planting schedules.

The genome is one planting day per species. Children are produced by
redrawing a random subset of genes uniformly inside their windows; the
per-gene redraw probability oscillates between ``1/n`` and ``rho_max`` as a
function of the number of consecutive rejections.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .core import (INVALID, DomainError, HarvestMatrix, HarvestProblem, Schedule, SpeciesRecord,
                   WeekMapping, WeeklyYield)
from .loss import LossVector, loss_vector

log = logging.getLogger(__name__)

S1 = "S1"
S2_1 = "S2-1"
S2_2 = "S2-2"
SCENARIOS = (S1, S2_1, S2_2)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str = S1
    fixed_capacity: Optional[float] = None
    cyclic: bool = False
    delta: int = 0

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.kind!r}; expected one of {SCENARIOS}")
        if self.kind == S1 and not (self.fixed_capacity is not None and self.fixed_capacity > 0):
            raise ConfigError("scenario S1 needs a positive fixed capacity")
        if self.delta < 0:
            raise ConfigError("week offset delta must be nonnegative")


@dataclass(frozen=True)
class EsConfig:
    scenario: ScenarioSpec
    rho_max: float = 0.01
    omega: float = 5e-4
    max_generations: int = 10**6
    seed: int = 0
    # stop as soon as the parent is lexicographically at least this good
    target: Optional[LossVector] = None
    # record the parent loss every `trace_stride` generations (0 disables)
    trace_stride: int = 0

    def __post_init__(self):
        if not 0 < self.rho_max <= 1:
            raise ConfigError(f"rho_max must lie in (0, 1], got {self.rho_max}")
        if not self.omega > 0:
            raise ConfigError(f"omega must be positive, got {self.omega}")
        if self.max_generations < 1:
            raise ConfigError("max_generations must be at least 1")

    def check_band(self, n_species: int):
        if self.rho_max * n_species < 1:
            raise ConfigError(
                f"rho_max={self.rho_max} is below 1/{n_species}; the mutation band is empty")


class HistoryRecord(NamedTuple):
    generation: int
    l_plus: float
    l_minus: float
    mutation_rate: float


@dataclass
class EsState:
    parent: Schedule
    parent_loss: LossVector
    counter_j: int
    generation: int
    capacity: float
    history: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    evaluations: int = 0


def mutation_rate(j, n_species: int, rho_max: float, omega: float):
    """Oscillating redraw probability; accepts scalar or array counters."""
    if n_species < 1:
        raise ConfigError("need at least one species")
    if rho_max * n_species < 1:
        raise ConfigError(f"rho_max={rho_max} is below 1/{n_species}")
    lo = 1.0 / n_species
    if np.ndim(j) == 0:
        rate = lo * (1.0 + (rho_max * n_species - 1.0) * math.sin(omega * j) ** 2)
        return min(max(rate, lo), rho_max)
    j = np.asarray(j, dtype=np.float64)
    rate = lo * (1.0 + (rho_max * n_species - 1.0) * np.sin(omega * j) ** 2)
    return np.clip(rate, lo, rho_max)


def _bounds(species):
    if isinstance(species, HarvestProblem):
        return species.low, species.high
    if len(species) == 0:
        raise DomainError("empty species set")
    low = np.array([s.d_early for s in species], dtype=np.int64)
    high = np.array([s.d_late for s in species], dtype=np.int64)
    return low, high


def init_schedule(species, rng: np.random.Generator) -> Schedule:
    low, high = _bounds(species)
    return Schedule(rng.integers(low, high + 1))


def select_genes(n: int, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Indices of genes to redraw, each chosen with probability ``rate``.

    Drawing the count first and then a uniform subset of that size has the same
    law as independent coin flips, but costs O(k) instead of O(n). An empty
    selection is replaced by a single uniformly chosen gene.
    """
    k = int(rng.binomial(n, rate))
    if k <= 1:
        return rng.integers(n, size=1)
    return rng.choice(n, size=k, replace=False)


def _mutate(plant: np.ndarray, low: np.ndarray, high: np.ndarray, rate: float,
            rng: np.random.Generator) -> np.ndarray:
    idx = select_genes(len(plant), rate, rng)
    child = plant.copy()
    child[idx] = rng.integers(low[idx], high[idx] + 1)
    return child


def mutate_schedule(parent: Schedule, rate: float, species, rng: np.random.Generator) -> Schedule:
    if not 0 < rate <= 1:
        raise DomainError(f"mutation rate must lie in (0, 1], got {rate}")
    low, high = _bounds(species)
    return Schedule(_mutate(parent.plant_day, low, high, rate, rng))


def count_possible_weeks(H: HarvestMatrix, W: WeekMapping) -> int:
    """Number of distinct weeks reachable by any valid harvest-matrix entry."""
    valid = H.entries[H.entries != INVALID]
    return int(len(np.unique(W.table[valid])))


def infer_capacity(scenario: ScenarioSpec, weekly, total_yield: float,
                   n_possible_weeks: Optional[int] = None) -> float:
    """Target weekly capacity for the scenario.

    S1 uses the given capacity. S2-1 spreads the total yield over the weeks
    the current schedule actually harvests in; S2-2 over every reachable week.
    """
    if scenario.kind == S1:
        return float(scenario.fixed_capacity)
    if not total_yield > 0:
        raise DomainError("total yield must be positive to infer a capacity")
    if scenario.kind == S2_1:
        per_week = weekly.per_week if isinstance(weekly, WeeklyYield) else np.asarray(weekly)
        n_active = int(np.count_nonzero(per_week > 0))
        if n_active == 0:
            raise RuntimeError("schedule harvests in no week; cannot infer capacity")
        return total_yield / n_active
    if not n_possible_weeks:
        raise RuntimeError("no reachable harvest weeks; cannot infer capacity")
    return total_yield / n_possible_weeks


def evolve(problem: HarvestProblem, config: EsConfig,
           score: Callable[[LossVector], object],
           initial: Optional[Schedule] = None) -> EsState:
    """Generic (1+1) loop: accept the child whenever its score is not worse.

    ``score`` maps a loss vector to something totally ordered; ties (equal
    scores) accept the child but leave the rejection counter untouched.
    """
    config.check_band(problem.n)
    rng = np.random.default_rng(config.seed)
    scenario = config.scenario
    low, high = problem.low, problem.high
    n = problem.n
    total = problem.total_yield
    n_possible = problem.n_possible_weeks
    dynamic = scenario.kind == S2_1

    if initial is None:
        plant = rng.integers(low, high + 1)
    else:
        plant = np.array(initial.plant_day, dtype=np.int64)
        if not problem.is_valid(plant):
            raise DomainError("initial schedule violates planting windows")
    weekly = problem.weekly(plant)
    C = infer_capacity(scenario, weekly, total, n_possible)
    parent_loss = loss_vector(weekly, C)
    parent_score = score(parent_loss)

    rate0 = mutation_rate(0, n, config.rho_max, config.omega)
    state = EsState(Schedule(plant), parent_loss, 0, 0, C,
                    history=[HistoryRecord(0, parent_loss.l_plus, parent_loss.l_minus, rate0)])
    target = config.target
    stride = config.trace_stride
    j = 0
    g = 0
    rho_max, omega = config.rho_max, config.omega
    for g in range(1, config.max_generations + 1):
        rate = mutation_rate(j, n, rho_max, omega)
        child = _mutate(plant, low, high, rate, rng)
        child_weekly = problem.weekly(child)
        child_loss = loss_vector(child_weekly, C)
        child_score = score(child_loss)
        if child_score <= parent_score:
            if child_score < parent_score:
                j = 0
                state.history.append(
                    HistoryRecord(g, child_loss.l_plus, child_loss.l_minus, rate))
            plant = child
            if dynamic:
                C = infer_capacity(scenario, child_weekly, total, n_possible)
                parent_loss = loss_vector(child_weekly, C)
            else:
                parent_loss = child_loss
            parent_score = score(parent_loss)
        else:
            j += 1
        if stride and g % stride == 0:
            state.trace.append(HistoryRecord(g, parent_loss.l_plus, parent_loss.l_minus, rate))
        if target is not None and tuple(parent_loss) <= tuple(target):
            break

    state.parent = Schedule(plant)
    state.parent_loss = parent_loss
    state.counter_j = j
    state.generation = g
    state.capacity = C
    state.evaluations = g + 1
    log.debug("ES finished after %d generations: %s at C=%.3f", g, parent_loss, C)
    return state


def hierarchical_score(loss: LossVector) -> tuple:
    return (loss.l_plus, loss.l_minus)


def run_one_plus_one_es(config: EsConfig, H: HarvestMatrix, species: Sequence[SpeciesRecord],
                        W: WeekMapping, initial: Optional[Schedule] = None) -> EsState:
    problem = HarvestProblem(H, species, W)
    return evolve(problem, config, hierarchical_score, initial)
