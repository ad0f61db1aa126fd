"""
Dynamic-programming oracles on the age-truncated state space.

Value functions are stored as arrays ``J[delta - 1, l1, l2]`` of shape
``(age_cap, 2, d)``.  Ages past the cap are clamped (``delta + 1 ->
min(delta + 1, cap)``), so only the last few ages are distorted.

Two solvers share one vectorized Bellman operator:

* :func:`value_iteration_discounted` for the discounted problem,
* :func:`relative_value_iteration` for the average-cost problem, anchored
  at ``(1, 1, 0)``.  Always-Channel-2 induces a periodic chain, so the
  iteration runs on the aperiodic transform ``tau T + (1 - tau) I``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .costs import CostFunction, LinearCost
from .model import Action, ChannelParams, Region, classify_region, classify_region_discounted, discount_sum
from .policy import Direction, Policy, TablePolicy, switch_point

log = logging.getLogger(__name__)

MAX_SWEEPS = 1_000_000
BOUNDARY_FRACTION = 0.05
NOISE_ULPS = 64
ACTIONS = (Action.CH1, Action.CH2, Action.NONE)

# region -> (direction at l1=0, direction at l1=1)
DIRECTIONS = {
    Region.B1: (Direction.NON_INCREASING, Direction.NON_INCREASING),
    Region.B2: (Direction.NON_DECREASING, Direction.NON_INCREASING),
    Region.B3: (Direction.NON_DECREASING, Direction.NON_DECREASING),
    Region.B4: (Direction.NON_INCREASING, Direction.NON_DECREASING),
}


class NonConvergence(RuntimeError):
    """Iteration budget exhausted before the tolerance was met."""


@dataclass
class ValueSolution:
    """Converged value function with its Q-table and greedy policy.

    ``Q[delta - 1, l1, l2, k]`` holds the value of action ``ACTIONS[k]``
    (Channel 1, Channel 2, idle); inadmissible entries are ``+inf``.
    ``policy[delta - 1, l1, l2]`` stores the greedy :class:`Action` value.
    """

    params: ChannelParams
    alpha: float | str
    J: np.ndarray
    Q: np.ndarray
    policy: np.ndarray
    gain: float | None
    iterations: int
    residual: float
    age_cap: int
    cost_name: str = "linear"
    unrestricted: bool = False

    def value(self, delta: int, l1: int, l2: int) -> float:
        return float(self.J[delta - 1, l1, l2])

    def q(self, delta: int, l1: int, l2: int, u: Action) -> float:
        return float(self.Q[delta - 1, l1, l2, ACTIONS.index(Action(u))])

    def action(self, delta: int, l1: int, l2: int = 0) -> Action:
        return Action(int(self.policy[min(delta, self.age_cap) - 1, l1, l2]))

    def greedy_policy(self, name: str = "greedy") -> TablePolicy:
        """Greedy actions at ``l2 = 0`` as a :class:`TablePolicy`."""
        table = np.empty((2, self.age_cap + 1), dtype=np.int64)
        table[:, 0] = int(Action.CH1)
        table[:, 1:] = self.policy[:, :, 0].T
        return TablePolicy(table, name=name)


@dataclass
class StructureReport:
    region: Region
    region_discounted: Region | None
    expected: tuple
    monotone: dict
    thresholds: dict
    matches: bool
    checked_ages: int
    notes: list = field(default_factory=list)


@dataclass
class SupermodReport:
    m: float
    region: Region
    max_dev_ch2: float
    l01_ok: bool
    l01_violations: list
    l11_crossover: int | None
    l11_ok: bool
    checked_ages: int

    @property
    def ok(self) -> bool:
        return self.max_dev_ch2 < 1e-6 and self.l01_ok and self.l11_ok


class _Operator:
    """Vectorized Bellman operator for one ``(params, cost, age_cap)``."""

    def __init__(self, params: ChannelParams, cost: CostFunction, age_cap: int,
                 unrestricted: bool = False):
        d = params.d
        if age_cap < 3 * d:
            raise ValueError(f"age_cap must be >= 3d = {3 * d}")
        self.d = d
        self.cap = age_cap
        self.unrestricted = unrestricted
        ages = np.arange(1, age_cap + 1)
        self.cost = np.asarray(cost(ages), dtype=float)
        if np.any(np.diff(self.cost) < 0) or np.any(self.cost < 0):
            raise ValueError("cost must be non-negative and non-decreasing in the age")
        self.on = np.array([params.on_prob(0), params.on_prob(1)])
        self.nxt = np.minimum(np.arange(age_cap) + 1, age_cap - 1)

    def _mix(self, J0, J1):
        # expectation over the next Channel-1 state, per previous state l1
        return self.on[None, :] * J1[:, None] + (1 - self.on[None, :]) * J0[:, None]

    def q_values(self, J: np.ndarray, alpha: float) -> np.ndarray:
        cap, d = self.cap, self.d
        c = self.cost[:, None]
        nxt = self.nxt
        Q = np.full((cap, 2, d, 3), np.inf)
        # decision states l2 == 0
        reset = self.on * J[0, 1, 0]
        Q[:, :, 0, 0] = c + alpha * (reset[None, :] + (1 - self.on[None, :]) * J[nxt, 0, 0][:, None])
        Q[:, :, 0, 1] = c + alpha * self._mix(J[nxt, 0, d - 1], J[nxt, 1, d - 1])
        if self.unrestricted:
            Q[:, :, 0, 2] = c + alpha * self._mix(J[nxt, 0, 0], J[nxt, 1, 0])
        # Channel 2 busy
        if d > 2:
            Q[:, :, 2:, 2] = c[:, :, None] + alpha * (
                self.on[None, :, None] * J[nxt, 1, 1:d - 1][:, None, :]
                + (1 - self.on[None, :, None]) * J[nxt, 0, 1:d - 1][:, None, :])
        deliver = self.on * J[d - 1, 1, 0] + (1 - self.on) * J[d - 1, 0, 0]
        Q[:, :, 1, 2] = c + alpha * deliver[None, :]
        return Q

    def fixed_q(self, Q: np.ndarray, table: np.ndarray) -> np.ndarray:
        """Value of following ``table`` (shape ``(cap, 2)``) at ``l2 = 0``."""
        J = Q.min(axis=3)
        k = np.where(table == int(Action.CH1), 0, np.where(table == int(Action.CH2), 1, 2))
        J[:, :, 0] = np.take_along_axis(Q[:, :, 0, :], k[:, :, None], axis=2)[:, :, 0]
        return J


def _greedy(Q: np.ndarray) -> np.ndarray:
    # ties go to the lower action index (Channel 1 first)
    k = np.argmin(Q, axis=3)
    return np.asarray(ACTIONS, dtype=np.int64)[k]


def _policy_table(policy: Policy | None, cap: int):
    if policy is None:
        return None
    if policy.randomized:
        raise TypeError("fixed-policy evaluation needs a deterministic policy")
    return policy.table(cap)[:, 1:].T.copy()


def value_iteration_discounted(params: ChannelParams, alpha: float,
                               cost: CostFunction | None = None, age_cap: int = 500,
                               tol: float = 1e-6, max_sweeps: int = MAX_SWEEPS,
                               unrestricted: bool = False, policy: Policy | None = None,
                               stopping: str = "sup") -> ValueSolution:
    """Discounted value iteration from ``J = 0``.

    Parameters
    ----------
    stopping : {"sup", "mcqueen"}
        ``"sup"`` stops once the sup-norm successive difference is below
        ``tol * (1 - alpha)``.  ``"mcqueen"`` stops once the McQueen
        bounds on ``J`` are ``tol`` apart and returns their midpoint,
        which is far cheaper for ``alpha`` close to 1.  Both rules accept
        a rounding floor of ``64 eps max|J|`` (scaled by ``alpha / (1 -
        alpha)`` for McQueen) when ``tol`` is below it.
    policy : Policy, optional
        Evaluate this policy instead of optimizing.
    """
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if age_cap < 20 * params.d:
        raise ValueError(f"age_cap must be >= 20d = {20 * params.d}")
    cost = cost or LinearCost()
    op = _Operator(params, cost, age_cap, unrestricted)
    table = _policy_table(policy, age_cap)
    J = np.zeros((age_cap, 2, params.d))
    target = tol * (1 - alpha)
    resid = math.inf
    for it in range(1, max_sweeps + 1):
        Q = op.q_values(J, alpha)
        Jn = Q.min(axis=3) if table is None else op.fixed_q(Q, table)
        diff = Jn - J
        if stopping == "sup":
            resid = float(np.max(np.abs(diff)))
            J = Jn
            floor = NOISE_ULPS * np.finfo(float).eps * float(np.max(np.abs(Jn)))
            if resid < max(target, floor):
                if resid >= target:
                    log.warning("successive difference %.3g limited by rounding floor %.3g",
                                resid, floor)
                break
        elif stopping == "mcqueen":
            lo, hi = float(diff.min()), float(diff.max())
            resid = alpha / (1 - alpha) * (hi - lo)
            J = Jn
            floor = alpha / (1 - alpha) * NOISE_ULPS * np.finfo(float).eps * float(np.max(np.abs(Jn)))
            if resid < max(tol, floor):
                if resid >= tol:
                    log.warning("McQueen gap %.3g limited by rounding floor %.3g", resid, floor)
                J = Jn + alpha / (1 - alpha) * 0.5 * (lo + hi)
                break
        else:
            raise ValueError(f"unknown stopping rule {stopping!r}")
    else:
        raise NonConvergence(f"value iteration: residual {resid:.3g} after {max_sweeps} sweeps")
    Q = op.q_values(J, alpha)
    return ValueSolution(params, alpha, J, Q, _greedy(Q), None, it, resid, age_cap,
                         cost.name, unrestricted)


def relative_value_iteration(params: ChannelParams, cost: CostFunction | None = None,
                             age_cap: int = 2000, tol: float = 1e-9,
                             max_sweeps: int = MAX_SWEEPS, unrestricted: bool = False,
                             policy: Policy | None = None, tau: float = 0.5) -> ValueSolution:
    """Average-cost relative value iteration.

    Iterates ``h <- tau T h + (1 - tau) h`` and re-anchors ``h(1, 1, 0) =
    0`` each sweep.  The gain is bracketed by ``min(Th - h)`` and
    ``max(Th - h)``; iteration stops when that bracket is narrower than
    ``tol`` (or than the rounding floor ``64 eps max|Th|``, which only
    binds for steep costs).  The gain is ``(Th - h)(1, 1, 0)`` clipped to
    the bracket.

    Parameters
    ----------
    policy : Policy, optional
        Evaluate this deterministic policy instead of optimizing.
    tau : float
        Aperiodicity weight in ``(0, 1]``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not (0.0 < tau <= 1.0):
        raise ValueError("tau must lie in (0, 1]")
    cost = cost or LinearCost()
    op = _Operator(params, cost, age_cap, unrestricted)
    table = _policy_table(policy, age_cap)
    h = np.zeros((age_cap, 2, params.d))
    span = math.inf
    for it in range(1, max_sweeps + 1):
        Q = op.q_values(h, 1.0)
        Th = Q.min(axis=3) if table is None else op.fixed_q(Q, table)
        diff = Th - h
        lo, hi = float(diff.min()), float(diff.max())
        span = hi - lo
        # large biases (steep costs) put a rounding floor under the span
        floor = NOISE_ULPS * np.finfo(float).eps * float(np.max(np.abs(Th)))
        if span < max(tol, floor):
            if span >= tol:
                log.warning("span %.3g limited by rounding floor %.3g", span, floor)
            # the anchor sits at small ages where rounding is mild
            gain = min(max(float(diff[0, 1, 0]), lo), hi)
            break
        h = tau * Th + (1 - tau) * h
        h -= h[0, 1, 0]
    else:
        raise NonConvergence(f"relative value iteration: span {span:.3g} after {max_sweeps} sweeps")
    h = Th - Th[0, 1, 0]
    Q = op.q_values(h, 1.0)
    return ValueSolution(params, "average", h, Q, _greedy(Q), gain, it, span, age_cap,
                         cost.name, unrestricted)


def _checked_ages(solution: ValueSolution) -> int:
    return max(int(solution.age_cap * (1 - BOUNDARY_FRACTION)), 1)


def _monotone(actions) -> dict:
    return {
        Direction.NON_DECREASING: switch_point(actions, Direction.NON_DECREASING),
        Direction.NON_INCREASING: switch_point(actions, Direction.NON_INCREASING),
    }


def check_threshold_structure(solution: ValueSolution, params: ChannelParams) -> StructureReport:
    """Is the greedy policy at ``l2 = 0`` threshold-type with the expected directions?

    The top 5% of ages are skipped.  For discounted solutions the expected
    directions come from the discounted region; both labels are reported.
    """
    region, _ = classify_region(params)
    region_a = None
    if solution.alpha != "average":
        region_a = classify_region_discounted(params, solution.alpha)
    expected = DIRECTIONS[region_a or region]
    n = _checked_ages(solution)
    monotone, thresholds, ok = {}, {}, True
    for l1 in (0, 1):
        acts = solution.policy[:n, l1, 0]
        sp = _monotone(acts)
        monotone[l1] = {dname: sp[dname] is not None for dname in sp}
        thresholds[l1] = sp[expected[l1]]
        ok &= sp[expected[l1]] is not None
    notes = []
    if region_a is not None and region_a is not region:
        notes.append(f"discounted region {region_a.value} differs from {region.value}")
    return StructureReport(region, region_a, expected, monotone, thresholds, ok, n, notes)


def check_supermodularity(solution: ValueSolution, params: ChannelParams,
                          alpha: float | None = None, atol: float = 1e-9) -> SupermodReport:
    """Q-difference checks on a discounted solution.

    With ``L(delta, l1, u) = Q(delta, l1, 0, u) - Q(delta - 1, l1, 0, u)``
    and ``m = sum_{i<d} alpha**i``:

    * ``L(delta, l1, Ch2) = m`` at every age whose busy period stays below the cap;
    * ``L(delta, 0, Ch1) <= m`` in B1(alpha) and B4(alpha), ``> m`` in B2(alpha) and B3(alpha);
    * ``L(delta, 1, Ch1) <= m`` in B1(alpha) and B2(alpha), ``> m`` otherwise, from some
      crossover age on.
    """
    alpha = solution.alpha if alpha is None else alpha
    if alpha == "average":
        raise ValueError("supermodularity checks need a discounted solution")
    d = params.d
    m = discount_sum(alpha, d)
    region = classify_region_discounted(params, alpha)
    n = _checked_ages(solution)
    Q = solution.Q
    L1 = np.diff(Q[:n, :, 0, 0], axis=0)  # row k: delta = k + 2
    L2 = np.diff(Q[:n, :, 0, 1], axis=0)
    top = min(n, solution.age_cap - d) - 1
    max_dev = float(np.max(np.abs(L2[:top] - m)))
    below = DIRECTIONS[region][0] is Direction.NON_INCREASING
    gap0 = L1[:, 0] - m
    bad0 = np.nonzero(gap0 > atol)[0] if below else np.nonzero(gap0 <= atol)[0]
    below1 = DIRECTIONS[region][1] is Direction.NON_INCREASING
    gap1 = L1[:, 1] - m
    good1 = (gap1 <= atol) if below1 else (gap1 > atol)
    # smallest age from which the l1 = 1 sign holds for good
    tail_bad = np.nonzero(~good1)[0]
    cross = 2 if tail_bad.size == 0 else int(tail_bad[-1]) + 3
    l11_ok = cross <= n - 1
    return SupermodReport(m, region, max_dev, bad0.size == 0,
                          [int(k) + 2 for k in bad0[:20]], cross if l11_ok else None,
                          l11_ok, n)


def idle_never_strictly_better(solution: ValueSolution, rtol: float = 1e-12) -> bool:
    """On an unrestricted solve, idling at ``l2 = 0`` is never the unique Q-minimizer."""
    if not solution.unrestricted:
        raise ValueError("solution was computed on the restricted action set")
    Q = solution.Q[: _checked_ages(solution), :, 0, :]
    best_tx = np.minimum(Q[..., 0], Q[..., 1])
    scale = np.maximum(1.0, np.abs(best_tx))
    return bool(np.all(Q[..., 2] >= best_tx - rtol * scale))
