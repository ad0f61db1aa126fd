"""Stationary scheduling policies on the zero-wait class.

A policy only has to decide at states with ``l2 == 0``; with Channel 2
busy the action is always idle.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .model import Action


class Direction(str, enum.Enum):
    # Channel 1 below the threshold, Channel 2 from it on
    NON_DECREASING = "non-decreasing"
    # Channel 2 below the threshold, Channel 1 from it on
    NON_INCREASING = "non-increasing"


@dataclass(frozen=True)
class IntRange:
    """Inclusive integer range; ``hi=None`` means unbounded (and includes infinity)."""

    lo: int
    hi: int | None = None

    def __contains__(self, x) -> bool:
        if x < self.lo:
            return False
        return self.hi is None or x <= self.hi

    def __str__(self) -> str:
        if self.hi is None:
            return f"{self.lo}..inf"
        if self.hi == self.lo:
            return str(self.lo)
        return f"{self.lo}..{self.hi}"


def threshold_action(direction: Direction, lam: float, delta: int) -> Action:
    below = delta < lam
    if direction is Direction.NON_DECREASING:
        return Action.CH1 if below else Action.CH2
    return Action.CH2 if below else Action.CH1


class Policy:
    """Base class.  Subclasses implement :meth:`action` for ``l2 == 0``."""

    name = "policy"
    randomized = False

    def action(self, delta: int, l1: int) -> Action:
        raise NotImplementedError

    def __call__(self, delta: int, l1: int) -> Action:
        return self.action(delta, l1)

    def table(self, max_age: int) -> np.ndarray:
        """Actions at ``(delta, l1, 0)`` as an int array of shape ``(2, max_age + 1)``.

        Column 0 is unused.  For ages beyond ``max_age`` callers reuse the
        last column, which is exact for every threshold policy whose
        thresholds lie below ``max_age``.
        """
        out = np.empty((2, max_age + 1), dtype=np.int64)
        out[:, 0] = int(Action.CH1)
        for l1 in (0, 1):
            for delta in range(1, max_age + 1):
                out[l1, delta] = int(self.action(delta, l1))
        return out


@dataclass(frozen=True)
class ThresholdPolicy(Policy):
    """Two threshold rules, one per previous Channel-1 state.

    ``lambda1_set`` holds every threshold for ``l1 = 1`` that induces the
    same Markov chain; ``lambda1`` is its smallest member.
    """

    dir0: Direction
    lambda0: float
    dir1: Direction
    lambda1: float
    lambda1_set: IntRange | None = None
    name: str = field(default="threshold", compare=False)

    def action(self, delta: int, l1: int) -> Action:
        if l1 == 0:
            return threshold_action(self.dir0, self.lambda0, delta)
        return threshold_action(self.dir1, self.lambda1, delta)


class ConstantPolicy(Policy):
    def __init__(self, u: Action, name: str):
        self.u = Action(u)
        self.name = name

    def action(self, delta: int, l1: int) -> Action:
        return self.u


def always_ch1() -> ConstantPolicy:
    return ConstantPolicy(Action.CH1, "mmWave")


def always_ch2() -> ConstantPolicy:
    return ConstantPolicy(Action.CH2, "sub-6GHz")


class RandomPolicy(Policy):
    """Picks Channel 1 with probability ``p_ch1`` at every decision epoch."""

    randomized = True

    def __init__(self, p_ch1: float = 0.5, name: str = "Random"):
        self.p_ch1 = p_ch1
        self.name = name

    def action(self, delta: int, l1: int) -> Action:
        raise TypeError("RandomPolicy has no deterministic action; use the simulator")


class TablePolicy(Policy):
    """Policy read from a lookup table (e.g. a greedy policy of an MDP solve)."""

    def __init__(self, table: np.ndarray, name: str = "table"):
        table = np.asarray(table, dtype=np.int64)
        if table.ndim != 2 or table.shape[0] != 2:
            raise ValueError("table must have shape (2, max_age + 1)")
        self._table = table
        self.name = name

    @property
    def max_age(self) -> int:
        return self._table.shape[1] - 1

    def action(self, delta: int, l1: int) -> Action:
        return Action(int(self._table[l1, min(delta, self.max_age)]))

    def table(self, max_age: int) -> np.ndarray:
        if max_age <= self.max_age:
            return self._table[:, : max_age + 1].copy()
        pad = np.repeat(self._table[:, -1:], max_age - self.max_age, axis=1)
        return np.concatenate([self._table, pad], axis=1)


def switch_point(actions, direction: Direction):
    """Threshold of a monotone action sequence ``actions[k]`` for ages ``k + 1``.

    Returns ``None`` if the sequence is not of the given threshold form,
    ``math.inf`` if it never switches.
    """
    first = Action.CH1 if direction is Direction.NON_DECREASING else Action.CH2
    seq = [Action(int(a)) for a in actions]
    k = 0
    while k < len(seq) and seq[k] is first:
        k += 1
    if any(a is first for a in seq[k:]):
        return None
    return math.inf if k == len(seq) else k + 1
