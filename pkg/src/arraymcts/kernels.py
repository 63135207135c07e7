"""Branch-free selection primitives shared by every search implementation.

Each scalar kernel is written once as plain Python and compiled with numba
(the ``*_jit`` names) for use inside the array searches. The Python versions
are what the tests and the tree reference call; both see the same arithmetic.
"""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import ContractViolation

# Finite stand-in for +inf so arithmetic selects never see inf * 0.
SATURATED_VALUE = sys.float_info.max * 2.0**-10


@dataclass(frozen=True)
class UctParams:
    c: float = 1.0

    def __post_init__(self):
        if not self.c >= 0.0:
            raise ContractViolation(f"exploration constant must be >= 0, got {self.c}")


def _as_int8(x):
    return np.atleast_1d(np.asarray(x)).astype(np.int8)


def _unwrap(arr, scalar):
    return int(arr[0]) if scalar else arr


def select_arith(a, b, cond):
    """Return ``a`` where ``cond`` holds, else ``b``, as ``a*c + b*(1-c)``.

    Accepts int8 scalars or arrays (broadcast elementwise).
    """
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0 and np.ndim(cond) == 0
    c = np.atleast_1d(np.asarray(cond, dtype=bool)).astype(np.int8)
    r = _as_int8(a) * c + _as_int8(b) * (np.int8(1) - c)
    return _unwrap(r.astype(np.int8), scalar)


def select_mask(a, b, cond):
    """Same contract as :func:`select_arith`, via an all-ones/all-zeros mask.

    The mask is grown from the 0/1 condition by shift-or doubling.
    """
    scalar = np.ndim(a) == 0 and np.ndim(b) == 0 and np.ndim(cond) == 0
    m = np.atleast_1d(np.asarray(cond, dtype=bool)).astype(np.int8)
    m = m | (m << 1)
    m = m | (m << 2)
    m = m | (m << 4)
    r = (_as_int8(a) & m) | (_as_int8(b) & ~m)
    return _unwrap(r.astype(np.int8), scalar)


def select(a, b, cond):
    """Generic arithmetic select for finite numbers (used inside the searches)."""
    return a * cond + b * (1 - cond)


def uct_value(child_value, child_visits, parent_visits, c):
    """UCT-augmented value with a saturating bonus for unvisited children."""
    if parent_visits < 1:
        raise ContractViolation("uct_value needs parent_visits >= 1")
    if child_visits < 0:
        raise ContractViolation("child_visits must be non-negative")
    c = c.c if isinstance(c, UctParams) else c
    return _uct_value(float(child_value), child_visits, parent_visits, float(c))


def _uct_value(child_value, child_visits, parent_visits, c):
    unvisited = child_visits == 0
    n = child_visits + unvisited
    augmented = child_value + c * math.sqrt(math.log(parent_visits) / n)
    return SATURATED_VALUE * unvisited + augmented * (1 - unvisited)


def _max_index(values):
    best = values[0]
    idx = 0
    for i in range(1, len(values)):
        v = values[i]
        better = v > best
        idx = i * better + idx * (1 - better)
        best = max(best, v)
    return idx


def max_index(values) -> int:
    """Index of the largest value; ties go to the lowest index."""
    if len(values) == 0:
        raise ContractViolation("max_index of an empty sequence")
    return int(_max_index(values))


def _any_unvisited(visits):
    all_visited = 1
    for v in visits:
        all_visited &= v != 0
    return not all_visited


def any_unvisited(child_visits) -> bool:
    if len(child_visits) == 0:
        raise ContractViolation("any_unvisited of an empty sequence")
    return bool(_any_unvisited(child_visits))


def _random_untried(visits, draw):
    k = 0
    for v in visits:
        k += v == 0
    target = int(draw * k)
    seen = 0
    out = 0
    for i in range(len(visits)):
        zero = visits[i] == 0
        hit = zero & (seen == target)
        out = i * hit + out * (1 - hit)
        seen += zero
    return out


def random_untried(child_visits, draw: float) -> int:
    """The ``floor(draw * k)``-th zero-visit index among ``k`` zeros, or 0 if none.

    Exactly one draw is consumed whether or not anything is untried.
    """
    if len(child_visits) == 0:
        raise ContractViolation("random_untried of an empty sequence")
    if not 0.0 <= draw < 1.0:
        raise ContractViolation(f"draw must lie in [0, 1), got {draw}")
    return int(_random_untried(child_visits, draw))


def incremental_mean(old_mean: float, sample: float, new_count: int) -> float:
    if new_count < 1:
        raise ContractViolation("incremental_mean needs new_count >= 1")
    return old_mean + (sample - old_mean) / new_count


select_jit = njit(cache=True)(select)
uct_value_jit = njit(cache=True)(_uct_value)
max_index_jit = njit(cache=True)(_max_index)
any_unvisited_jit = njit(cache=True)(_any_unvisited)
random_untried_jit = njit(cache=True)(_random_untried)
