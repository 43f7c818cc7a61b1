"""Piecewise capacity loss and its lexicographic (hierarchical) comparison.

Below capacity the per-week loss is the concave ``r(1 - r)`` with ``r = h/C``,
which pushes weeks towards either empty or full. At or above capacity it is
the convex ``exp(r) - e``, which spreads overshoot out. Over-capacity loss
always dominates the comparison.
"""

from __future__ import annotations

import math
from enum import Enum
from typing import NamedTuple

import numpy as np

from .core import DomainError, WeeklyYield


class LossVector(NamedTuple):
    l_plus: float
    l_minus: float


class Ordering(Enum):
    A_BETTER = "a-better"
    B_BETTER = "b-better"
    TIE = "tie"


def interval_loss(h: float, C: float) -> float:
    if not C > 0:
        raise DomainError(f"capacity must be positive, got {C}")
    # one code path with loss_vector so scalar and summed values agree bitwise
    part = loss_vector(np.array([h], dtype=np.float64), C)
    return part.l_plus + part.l_minus


def _per_week(weekly) -> np.ndarray:
    if isinstance(weekly, WeeklyYield):
        return weekly.per_week
    return np.asarray(weekly, dtype=np.float64)


def loss_vector(weekly, C: float) -> LossVector:
    """Sum the interval loss over weeks at/above and below capacity separately.

    Empty weeks land in ``l_minus`` where they contribute exactly zero.
    """
    if not C > 0:
        raise DomainError(f"capacity must be positive, got {C}")
    h = _per_week(weekly)
    # (C - h)/C and expm1 avoid cancellation as h approaches C
    over = h >= C
    ho = h[over]
    hu = h[~over]
    l_plus = float(np.sum(math.e * np.expm1((ho - C) / C))) if ho.size else 0.0
    l_minus = float(np.sum((hu / C) * ((C - hu) / C))) if hu.size else 0.0
    return LossVector(l_plus, l_minus)


def compare_loss(a: LossVector, b: LossVector) -> Ordering:
    """Exact lexicographic order; no tolerance is applied on purpose."""
    if a.l_plus != b.l_plus:
        return Ordering.A_BETTER if a.l_plus < b.l_plus else Ordering.B_BETTER
    if a.l_minus != b.l_minus:
        return Ordering.A_BETTER if a.l_minus < b.l_minus else Ordering.B_BETTER
    return Ordering.TIE


def not_worse(a: LossVector, b: LossVector) -> bool:
    """True when ``a`` is lexicographically at least as good as ``b``."""
    return tuple(a) <= tuple(b)
