"""
Problem instance, state space and one-step dynamics.

A source sends fresh updates either over Channel 1, a Gilbert-Elliot
ON/OFF channel with one-slot service, or over Channel 2, a reliable
channel that needs ``d`` slots per packet.  The controller observes the
Channel-1 state of the previous slot, so the Markov state is
``(delta, l1, l2)``: current age, previous Channel-1 state and remaining
Channel-2 service time.

Channel-1 transition matrix, rows/columns ordered (ON, OFF)::

    P = [[q,   1 - q],
         [1-p, p    ]]
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

DEFAULT_AGE_CAP = 2000
NEAR_BOUNDARY = 1e-9


class Action(enum.IntEnum):
    NONE = 0
    CH1 = 1
    CH2 = 2


class Region(str, enum.Enum):
    B1 = "B1"
    B2 = "B2"
    B3 = "B3"
    B4 = "B4"


class InvalidParameters(ValueError):
    pass


class InadmissibleAction(ValueError):
    pass


@dataclass(frozen=True)
class ChannelParams:
    """Channel parameters ``(p, q, d)``.

    Parameters
    ----------
    p : float
        Self-transition probability of the OFF state of Channel 1.
    q : float
        Self-transition probability of the ON state of Channel 1.
    d : int
        Transmission time of Channel 2 in slots, ``d >= 2``.
    """

    p: float
    q: float
    d: int

    def __post_init__(self):
        if not (0.0 < self.p < 1.0):
            raise InvalidParameters(f"p must lie in (0, 1), got {self.p!r}")
        if not (0.0 < self.q < 1.0):
            raise InvalidParameters(f"q must lie in (0, 1), got {self.q!r}")
        if isinstance(self.d, bool) or int(self.d) != self.d or self.d < 2:
            raise InvalidParameters(f"d must be an integer >= 2, got {self.d!r}")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "q", float(self.q))

    @property
    def P(self) -> np.ndarray:
        """Channel-1 transition matrix indexed by ``[l1, l1']`` with 0=OFF, 1=ON."""
        # index order (OFF, ON) so that the array index equals l1
        return np.array([[self.p, 1.0 - self.p], [1.0 - self.q, self.q]])

    def on_prob(self, l1: int) -> float:
        """Probability that Channel 1 is ON in the next slot given ``l1``."""
        return 1.0 - self.p if l1 == 0 else self.q

    @property
    def is_iid(self) -> bool:
        return abs(self.p + self.q - 1.0) < 1e-12


@dataclass(frozen=True, order=True)
class SystemState:
    delta: int
    l1: int
    l2: int

    def validate(self, params: ChannelParams) -> None:
        if self.delta < 1:
            raise ValueError(f"age must be >= 1, got {self.delta}")
        if self.l1 not in (0, 1):
            raise ValueError(f"l1 must be 0 or 1, got {self.l1}")
        if not (0 <= self.l2 <= params.d - 1):
            raise ValueError(f"l2 must lie in [0, {params.d - 1}], got {self.l2}")


@dataclass(frozen=True)
class MatrixPowers:
    """Rows of ``P**k``: ``[a_k, b_k]`` starts OFF, ``[aP_k, bP_k]`` starts ON.

    ``a`` entries are ON probabilities and ``b`` entries OFF probabilities.
    """

    k: int
    a: float
    b: float
    aP: float
    bP: float


def transition(s: SystemState, u: Action, params: ChannelParams,
               age_cap: int = DEFAULT_AGE_CAP, unrestricted: bool = False):
    """Exact next-state distribution of ``s`` under action ``u``.

    Ages are clamped at ``age_cap``.  With ``unrestricted=True`` the idle
    action is also accepted when Channel 2 is free.

    Returns
    -------
    list of (SystemState, float)
    """
    d = params.d
    if age_cap < d + 1:
        raise ValueError(f"age_cap must be >= d + 1 = {d + 1}")
    s.validate(params)
    if s.delta > age_cap:
        raise ValueError(f"age {s.delta} exceeds age_cap {age_cap}")
    u = Action(u)
    if s.l2 > 0 and u is not Action.NONE:
        raise InadmissibleAction(f"{u.name} while Channel 2 is busy at {s}")
    if s.l2 == 0 and u is Action.NONE and not unrestricted:
        raise InadmissibleAction(f"idling at {s} is outside the zero-wait class")

    on = params.on_prob(s.l1)
    nxt = min(s.delta + 1, age_cap)
    if u is Action.CH1:
        out = [(SystemState(1, 1, 0), on), (SystemState(nxt, 0, 0), 1.0 - on)]
    elif u is Action.CH2:
        out = [(SystemState(nxt, 1, d - 1), on), (SystemState(nxt, 0, d - 1), 1.0 - on)]
    elif s.l2 == 1:
        out = [(SystemState(d, 1, 0), on), (SystemState(d, 0, 0), 1.0 - on)]
    else:
        l2 = max(s.l2 - 1, 0)
        out = [(SystemState(nxt, 1, l2), on), (SystemState(nxt, 0, l2), 1.0 - on)]
    return out


def region_functions(params: ChannelParams) -> tuple[float, float, float]:
    """Return ``(F, G, H)`` whose signs partition the parameter space."""
    p, q, d = params.p, params.q, params.d
    F = 1.0 / (1.0 - p) - d
    G = 1.0 - d * q
    H = (1.0 - q) / (1.0 - p) - d + 1.0
    return F, G, H


def _label(F: float, G: float, H: float) -> Region:
    if F <= 0:
        return Region.B1 if H <= 0 else Region.B4
    return Region.B2 if G <= 0 else Region.B3


def classify_region(params: ChannelParams) -> tuple[Region, tuple[float, float, float]]:
    """Region label together with the ``(F, G, H)`` values that decide it.

    Ties are assigned by the exact signs (``F <= 0`` belongs to B1/B4,
    ``G <= 0`` to B2, ``H <= 0`` to B1); there is no tolerance band.
    """
    F, G, H = region_functions(params)
    return _label(F, G, H), (F, G, H)


def near_boundary(params: ChannelParams, tol: float = NEAR_BOUNDARY) -> bool:
    """True when the deciding function of the region is within ``tol`` of zero."""
    F, G, H = region_functions(params)
    if abs(F) < tol:
        return True
    return abs(H) < tol if F <= 0 else abs(G) < tol


def discount_sum(alpha: float, n: int) -> float:
    """``sum_{i<n} alpha**i`` in closed form."""
    return (1.0 - alpha ** n) / (1.0 - alpha)


def region_functions_discounted(params: ChannelParams, alpha: float) -> tuple[float, float, float]:
    if not (0.0 < alpha < 1.0):
        raise ValueError(f"alpha must lie in (0, 1), got {alpha!r}")
    p, q, d = params.p, params.q, params.d
    m = discount_sum(alpha, d)
    geo = 1.0 / (1.0 - alpha * p)
    F = geo - m
    G = 1.0 + alpha * (1.0 - q) * m - m
    H = 1.0 + alpha * (1.0 - q) * geo - m
    return F, G, H


def classify_region_discounted(params: ChannelParams, alpha: float) -> Region:
    """Region of ``params`` under the discounted problem with factor ``alpha``."""
    return _label(*region_functions_discounted(params, alpha))


def matrix_powers(params: ChannelParams, k: int) -> MatrixPowers:
    """Rows of the ``k``-step Channel-1 transition matrix by repeated multiplication."""
    if k < 0:
        raise ValueError("k must be non-negative")
    # rows/cols ordered (ON, OFF)
    P = np.array([[params.q, 1.0 - params.q], [1.0 - params.p, params.p]])
    M = np.eye(2)
    for _ in range(k):
        M = M @ P
    return MatrixPowers(k=k, a=float(M[1, 0]), b=float(M[1, 1]),
                        aP=float(M[0, 0]), bP=float(M[0, 1]))


def states(params: ChannelParams, age_cap: int):
    """Enumerate the truncated state space in (delta, l1, l2) order."""
    for delta in range(1, age_cap + 1):
        for l1 in (0, 1):
            for l2 in range(params.d):
                yield SystemState(delta, l1, l2)


def admissible_actions(s: SystemState, unrestricted: bool = False):
    if s.l2 > 0:
        return (Action.NONE,)
    if unrestricted:
        return (Action.CH1, Action.CH2, Action.NONE)
    return (Action.CH1, Action.CH2)


def stationary_on_probability(params: ChannelParams) -> float:
    """Long-run fraction of slots in which Channel 1 is ON."""
    return (1.0 - params.p) / (2.0 - params.p - params.q)


def default_warmup(params: ChannelParams) -> int:
    return int(math.ceil(10 * params.d * max(1.0 / (1.0 - params.p), params.d)))
