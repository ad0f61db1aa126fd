"""
Stationary analysis of the Markov chain induced by a stationary policy.

This is the numerical ground truth for every closed-form average age in
:mod:`hetero_aoi.exact`: it enumerates the reachable states, assembles the
row-stochastic transition matrix and solves ``pi P = pi`` directly.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .costs import CostFunction, LinearCost
from .model import Action, ChannelParams, SystemState, transition
from .policy import Policy

DENSE_LIMIT = 3000


class ChainTruncated(RuntimeError):
    """The reachable set touches the age cap although a finite chain was expected."""


class SingularChain(RuntimeError):
    """The balance equations have no unique solution (several recurrent classes)."""


@dataclass
class Chain:
    params: ChannelParams
    states: list
    index: dict
    P: sp.csr_matrix
    age_cap: int
    truncated: bool

    @property
    def ages(self) -> np.ndarray:
        return np.array([s.delta for s in self.states], dtype=float)


@dataclass
class ChainSolution:
    chain: Chain
    pi: np.ndarray
    average_age: float
    method: str

    @property
    def states(self):
        return self.chain.states

    def prob(self, delta: int, l1: int, l2: int) -> float:
        i = self.chain.index.get(SystemState(delta, l1, l2))
        return 0.0 if i is None else float(self.pi[i])

    def age_distribution(self) -> dict:
        """Stationary law of the age, summed over the channel states."""
        out: dict = {}
        for s, w in zip(self.chain.states, self.pi):
            out[s.delta] = out.get(s.delta, 0.0) + float(w)
        return out


def build_chain(policy: Policy, params: ChannelParams, age_cap: int,
                start: SystemState | None = None, strict: bool = True) -> Chain:
    """Enumerate the states reachable from ``start`` under ``policy``.

    Parameters
    ----------
    strict : bool
        Raise :class:`ChainTruncated` if the age cap is reached.  Policies
        that use Channel 1 forever at high ages (e.g. always Channel 1) have
        an infinite recurrent class and need ``strict=False``.
    """
    if age_cap < 3 * params.d:
        raise ValueError(f"age_cap must be >= 3d = {3 * params.d}")
    if start is None:
        start = SystemState(1, 1, 0)
    index = {start: 0}
    states = [start]
    rows, cols, vals = [], [], []
    truncated = False
    queue = deque([start])
    while queue:
        s = queue.popleft()
        u = policy(s.delta, s.l1) if s.l2 == 0 else Action.NONE
        i = index[s]
        for t, prob in transition(s, u, params, age_cap):
            if prob == 0.0:
                continue
            if t.delta == age_cap:
                truncated = True
            j = index.get(t)
            if j is None:
                j = index[t] = len(states)
                states.append(t)
                queue.append(t)
            rows.append(i)
            cols.append(j)
            vals.append(prob)
    if truncated and strict:
        raise ChainTruncated(
            f"reachable set hits age_cap={age_cap}; raise the cap or pass strict=False")
    n = len(states)
    P = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    P.sum_duplicates()
    return Chain(params, states, index, P, age_cap, truncated)


def _solve_direct(P) -> np.ndarray:
    n = P.shape[0]
    b = np.zeros(n)
    b[-1] = 1.0
    if n <= DENSE_LIMIT:
        A = P.toarray().T - np.eye(n)
        A[-1, :] = 1.0
        try:
            lu = scipy.linalg.lu_factor(A, check_finite=False)
        except scipy.linalg.LinAlgError as exc:
            raise SingularChain(str(exc)) from exc
        if np.min(np.abs(np.diag(lu[0]))) < 1e-13:
            raise SingularChain("balance equations are numerically singular")
        return scipy.linalg.lu_solve(lu, b, check_finite=False)
    A = (P.T - sp.identity(n, format="csr")).tolil()
    A[n - 1, :] = np.ones(n)
    pi = spla.spsolve(A.tocsc(), b)
    if not np.all(np.isfinite(pi)):
        raise SingularChain("balance equations are numerically singular")
    return pi


def _solve_power(P, tol: float = 1e-16, max_iter: int = 2_000_000) -> np.ndarray:
    n = P.shape[0]
    # lazy chain: same invariant law, aperiodic
    PT = (0.5 * (P.T + sp.identity(n, format="csr"))).tocsr()
    pi = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        nxt = PT @ pi
        nxt /= nxt.sum()
        if np.max(np.abs(nxt - pi)) <= tol:
            return nxt
        pi = nxt
    raise RuntimeError("power iteration did not converge")


def stationary_distribution(chain: Chain, method: str = "auto") -> ChainSolution:
    """Unique stationary distribution of ``chain``.

    ``method`` is ``"direct"`` (one balance equation replaced by the
    normalization), ``"power"`` (lazy power iteration) or ``"auto"``, which
    tries the direct solve and falls back to power iteration.
    """
    P = chain.P
    if method == "power":
        pi = _solve_power(P)
    elif method == "direct":
        pi = _solve_direct(P)
    elif method == "auto":
        try:
            pi = _solve_direct(P)
        except (SingularChain, RuntimeError):
            pi = _solve_power(P)
            method = "power"
        else:
            method = "direct"
    else:
        raise ValueError(f"unknown method {method!r}")
    pi = np.where(np.abs(pi) < 1e-300, 0.0, pi)
    if np.min(pi) < -1e-10:
        raise SingularChain("negative stationary mass; chain has several recurrent classes")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    resid = np.max(np.abs(P.T @ pi - pi))
    if resid > 1e-10:
        raise SingularChain(f"balance residual {resid:.3g} too large")
    return ChainSolution(chain, pi, float(pi @ chain.ages), method)


def average_age(solution: ChainSolution) -> float:
    return float(solution.pi @ solution.chain.ages)


def average_cost(solution: ChainSolution, cost: CostFunction | None = None) -> float:
    cost = cost or LinearCost()
    return float(solution.pi @ cost(solution.chain.ages))


def policy_average_age(policy: Policy, params: ChannelParams, age_cap: int = 2000,
                       strict: bool = True, start: SystemState | None = None) -> float:
    """Convenience wrapper: build, solve and return the average age."""
    chain = build_chain(policy, params, age_cap, start=start, strict=strict)
    return stationary_distribution(chain).average_age
