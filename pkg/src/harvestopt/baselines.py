"""Comparison optimizers scored with the same hierarchical loss as the main ES."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import HarvestMatrix, HarvestProblem, Schedule, SpeciesRecord, WeekMapping
from .evolution import EsConfig, evolve, infer_capacity
from .loss import LossVector, loss_vector


@dataclass(frozen=True)
class BaselineResult:
    method: str
    best_schedule: Schedule
    best_loss: LossVector
    evaluations: int
    capacity: float


def _problem(H, species, W) -> HarvestProblem:
    if isinstance(H, HarvestProblem):
        return H
    return HarvestProblem(H, species, W)


def run_weighted_sum_es(config: EsConfig, lambda_weight: float, H: HarvestMatrix,
                        species: Optional[Sequence[SpeciesRecord]] = None,
                        W: Optional[WeekMapping] = None) -> BaselineResult:
    """(1+1)-ES minimizing ``l_plus + lambda_weight * l_minus``."""
    if not lambda_weight > 0:
        raise ValueError(f"lambda_weight must be positive, got {lambda_weight}")
    problem = _problem(H, species, W)
    state = evolve(problem, config, lambda l: l.l_plus + lambda_weight * l.l_minus)
    return BaselineResult("weighted-sum-es", state.parent, state.parent_loss,
                          state.evaluations, state.capacity)


def run_random_search(config: EsConfig, H: HarvestMatrix,
                      species: Optional[Sequence[SpeciesRecord]] = None,
                      W: Optional[WeekMapping] = None,
                      budget: Optional[int] = None) -> BaselineResult:
    """Best of ``budget`` independent uniform schedules (first one wins ties).

    Each draw is scored under its own inferred capacity, which for S1 and S2-2
    is the same for every schedule.
    """
    problem = _problem(H, species, W)
    budget = config.max_generations if budget is None else budget
    if budget < 1:
        raise ValueError("budget must be at least 1")
    rng = np.random.default_rng(config.seed)
    low, high = problem.low, problem.high
    best = best_loss = best_C = None
    for _ in range(budget):
        plant = rng.integers(low, high + 1)
        weekly = problem.weekly(plant)
        C = infer_capacity(config.scenario, weekly, problem.total_yield,
                           problem.n_possible_weeks)
        loss = loss_vector(weekly, C)
        if best_loss is None or tuple(loss) < tuple(best_loss):
            best, best_loss, best_C = plant, loss, C
    return BaselineResult("random-search", Schedule(best), best_loss, budget, best_C)
