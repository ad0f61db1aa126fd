"""
Monte Carlo simulation on the untruncated system.

Random streams
--------------
Replication ``r`` of a run with seed ``S`` draws from
``numpy.random.SeedSequence(S, spawn_key=(r,))``, whose two children seed
two PCG64 generators: one for the Channel-1 ON/OFF path and one for the
coin flips of randomized policies.  The Channel-1 path is generated
slot-by-slot up front and indexed by absolute time, so every policy in
:func:`compare_policies` sees the same channel (common random numbers).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np

from .costs import CostFunction, ExponentialCost, LinearCost, COST_CLIP
from .model import Action, ChannelParams, default_warmup, stationary_on_probability
from .policy import Policy, RandomPolicy, always_ch1, always_ch2

_LINEAR, _EXP = 0, 1


@dataclass(frozen=True)
class SimConfig:
    """Run length and seeding.

    ``horizon`` counts every simulated slot; the first ``warmup`` slots are
    discarded, so each replication averages ``horizon - warmup`` slots.
    ``warmup=None`` picks ``10 d max(1/(1-p), d)``.
    """

    horizon: int = 1_000_000
    replications: int = 20
    seed: int = 0
    warmup: int | None = None

    def resolved_warmup(self, params: ChannelParams) -> int:
        w = default_warmup(params) if self.warmup is None else int(self.warmup)
        if not (0 <= w < self.horizon):
            raise ValueError(f"need horizon > warmup >= 0, got horizon={self.horizon}, warmup={w}")
        return w

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not (0 <= self.seed < 2**64):
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass
class SimResult:
    mean: float
    std_error: float
    per_replication: list
    policy_name: str
    horizon: int = 0
    seed: int = 0
    on_fraction: float = math.nan
    age_hist: np.ndarray | None = field(default=None, repr=False)


def replication_streams(seed: int, rep: int):
    """``(channel_rng, decision_rng)`` for replication ``rep``."""
    children = np.random.SeedSequence(seed, spawn_key=(rep,)).spawn(2)
    return tuple(np.random.Generator(np.random.PCG64(c)) for c in children)


def channel_path(params: ChannelParams, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """Channel-1 states for slots ``-1, 0, ..., horizon - 1`` (index shifted by one)."""
    u = rng.random(horizon + 1)
    return _channel_kernel(u, params.p, params.q, stationary_on_probability(params))


@numba.njit(cache=True)
def _channel_kernel(u, p, q, pi_on):
    n = u.shape[0]
    ch = np.empty(n, dtype=np.uint8)
    ch[0] = 1 if u[0] < pi_on else 0
    for t in range(1, n):
        on = q if ch[t - 1] == 1 else 1.0 - p
        ch[t] = 1 if u[t] < on else 0
    return ch


@numba.njit(cache=True)
def _run_kernel(ch, coins, table, p_ch1, randomized, d, warmup, cost_kind, log_eta,
                log_clip, hist, trace):
    horizon = ch.shape[0] - 1
    max_age = table.shape[1] - 1
    nh = hist.shape[0]
    keep = trace.shape[0] > 0
    delta = 1
    l2 = 0
    total = 0.0
    on_count = 0
    for t in range(horizon):
        l1 = ch[t]
        now = ch[t + 1]
        if keep:
            trace[t, 0] = delta
            trace[t, 1] = l2
        if t >= warmup:
            if cost_kind == 0:
                total += delta
            else:
                total += math.exp(min(delta * log_eta, log_clip))
            on_count += now
            if delta < nh:
                hist[delta] += 1
        if l2 == 0:
            if randomized:
                u = 1 if coins[t] < p_ch1 else 2
            else:
                u = table[l1, delta if delta <= max_age else max_age]
            if u == 1:
                delta = 1 if now == 1 else delta + 1
            else:
                l2 = d - 1
                delta += 1
        elif l2 == 1:
            l2 = 0
            delta = d
        else:
            l2 -= 1
            delta += 1
    n = horizon - warmup
    return total / n, on_count / n


def _cost_args(cost: CostFunction):
    if isinstance(cost, LinearCost):
        return _LINEAR, 0.0
    if isinstance(cost, ExponentialCost):
        return _EXP, math.log(cost.eta)
    raise TypeError(f"simulator supports linear and exponential costs, got {cost!r}")


def _run(policy: Policy, params: ChannelParams, ch: np.ndarray, coins: np.ndarray,
         cost: CostFunction, warmup: int, table_age: int, hist_len: int,
         trace: np.ndarray | None = None):
    kind, log_eta = _cost_args(cost)
    if policy.randomized:
        table = np.ones((2, 2), dtype=np.int64)
        p_ch1 = float(policy.p_ch1)
    else:
        table = policy.table(table_age)
        p_ch1 = 0.0
    hist = np.zeros(hist_len, dtype=np.int64)
    if trace is None:
        trace = np.zeros((0, 2), dtype=np.int64)
    mean, on = _run_kernel(ch, coins, table, p_ch1, policy.randomized, params.d, warmup,
                           kind, log_eta, math.log(COST_CLIP), hist, trace)
    return mean, on, hist


def _table_age(policy: Policy, params: ChannelParams) -> int:
    # threshold tables are exact past the largest finite threshold
    lams = [getattr(policy, a, 0) for a in ("lambda0", "lambda1")]
    finite = [int(x) for x in lams if x is not None and math.isfinite(x)]
    return max([4 * params.d, getattr(policy, "max_age", 0)] + [x + 1 for x in finite])


def _summarize(values, name, config, on_fracs, hist) -> SimResult:
    arr = np.asarray(values, dtype=float)
    se = float(arr.std(ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
    return SimResult(float(arr.mean()), se, arr.tolist(), name, config.horizon, config.seed,
                     float(np.mean(on_fracs)), hist)


def simulate(policy: Policy, params: ChannelParams, cost: CostFunction | None = None,
             config: SimConfig | None = None, hist_len: int = 0) -> SimResult:
    """Time-average cost of ``policy`` over independent replications.

    Parameters
    ----------
    hist_len : int
        If positive, also return the pooled post-warmup age histogram for
        ages ``< hist_len`` (index = age).
    """
    cost = cost or LinearCost()
    config = config or SimConfig()
    warmup = config.resolved_warmup(params)
    table_age = _table_age(policy, params)
    vals, ons = [], []
    hist = np.zeros(max(hist_len, 0), dtype=np.int64)
    for r in range(config.replications):
        ch_rng, coin_rng = replication_streams(config.seed, r)
        ch = channel_path(params, config.horizon, ch_rng)
        coins = coin_rng.random(config.horizon) if policy.randomized else np.zeros(1)
        m, on, h = _run(policy, params, ch, coins, cost, warmup, table_age, max(hist_len, 0))
        vals.append(m)
        ons.append(on)
        hist += h
    return _summarize(vals, policy.name, config, ons, hist if hist_len > 0 else None)


def simulate_trace(policy: Policy, params: ChannelParams, horizon: int, seed: int = 0,
                   rep: int = 0):
    """Slot-by-slot path of one replication.

    Returns
    -------
    ages : ndarray of shape (horizon,)
        Age at the start of each slot.
    l2 : ndarray of shape (horizon,)
        Remaining Channel-2 service time at the start of each slot.
    channel : ndarray of shape (horizon + 1,)
        Channel-1 state, ``channel[t + 1]`` being the state during slot ``t``.
    """
    ch_rng, coin_rng = replication_streams(seed, rep)
    ch = channel_path(params, horizon, ch_rng)
    coins = coin_rng.random(horizon)
    trace = np.zeros((horizon, 2), dtype=np.int64)
    _run(policy, params, ch, coins, LinearCost(), 0, _table_age(policy, params), 0, trace)
    return trace[:, 0], trace[:, 1], ch


def default_optimal_policy(params: ChannelParams, cost: CostFunction, age_cap: int = 200) -> Policy:
    """Closed-form optimum for the linear cost, relative value iteration otherwise."""
    if isinstance(cost, LinearCost):
        from .exact import solve
        return solve(params).policy
    from .mdp import relative_value_iteration
    sol = relative_value_iteration(params, cost, age_cap=age_cap)
    return sol.greedy_policy(name="Age-optimal")


def compare_policies(params: ChannelParams, cost: CostFunction | None = None,
                     config: SimConfig | None = None, optimal: Policy | None = None,
                     age_cap: int = 200) -> list:
    """Age-optimal, mmWave (always Channel 1), sub-6GHz (always Channel 2) and Random.

    All four policies run on the same Channel-1 path in each replication.
    ``optimal`` defaults to :func:`default_optimal_policy`.
    """
    cost = cost or LinearCost()
    config = config or SimConfig()
    warmup = config.resolved_warmup(params)
    opt = optimal or default_optimal_policy(params, cost, age_cap)
    policies = [opt, always_ch1(), always_ch2(), RandomPolicy(0.5)]
    names = ["Age-optimal", "mmWave", "sub-6GHz", "Random"]
    vals = [[] for _ in policies]
    ons = []
    for r in range(config.replications):
        ch_rng, coin_rng = replication_streams(config.seed, r)
        ch = channel_path(params, config.horizon, ch_rng)
        coins = coin_rng.random(config.horizon)
        for k, pol in enumerate(policies):
            m, on, _ = _run(pol, params, ch, coins, cost, warmup, _table_age(pol, params), 0)
            vals[k].append(m)
        ons.append(on)
    return [_summarize(v, n, config, ons, None) for v, n in zip(vals, names)]
