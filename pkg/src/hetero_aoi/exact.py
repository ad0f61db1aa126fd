"""
Closed-form optimal policy and optimal average age.

Outside the "fast Channel 1" regions the answer is a constant policy or a
two-way comparison.  When ``1 - p < 1/d`` (regions B2 and B3) the optimal
average age is the smallest of a handful of fractional programs

    beta_i = min_{s in N(i)} f_i(s) / g_i(s),

each solved by bisection on ``h_i(beta) = min_s f_i(s) - beta g_i(s)``.
The inner minimization has a closed-form argmin because
``p**-(s-1) * (r(s+1) - r(s))`` is affine in ``s`` with slope
``1 - d(1-p) > 0``.

``f_i(s) / g_i(s)`` is the average age of the chain induced by a threshold
``s`` on ``mu(delta, 0, 0)`` together with a choice of actions at the two
reachable Channel-1-ON states ``(1, 1, 0)`` and ``(d, 1, 0)``:

====  ========  ==============  ==============
 i    N(i)      mu(1, 1, 0)     mu(d, 1, 0)
====  ========  ==============  ==============
 1    s > d     Channel 1       Channel 1
 2    s <= d    Channel 1       Channel 1
 3    s > d     Channel 1       Channel 2
 4    s > d     Channel 2       Channel 2
====  ========  ==============  ==============

Every expression here is checked against :mod:`hetero_aoi.chain`.
"""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .model import (ChannelParams, Region, classify_region, matrix_powers,
                    region_functions)
from .policy import Direction, IntRange, ThresholdPolicy

log = logging.getLogger(__name__)

FAMILIES = (1, 2, 3, 4)
CANDIDATE_ORDER = ("beta1", "beta2", "beta3", "beta4", "f0_over_g0",
                   "f0p_over_g0p", "always_ch1", "always_ch2")
IDENTITY_TOL = 1e-8
LARGE_THRESHOLD = 10**6
# thresholds are capped here; beyond it the policy never leaves Channel 1 in practice
THRESHOLD_GUARD = 10**8
DIRECT_SUM_LIMIT = 100_000

ND = Direction.NON_DECREASING
NI = Direction.NON_INCREASING


class BracketError(RuntimeError):
    """``h_i`` does not change sign on the initial bisection interval."""


class IdentityError(RuntimeError):
    """The finite-difference identity behind ``l_i, o_i`` does not hold."""


class NotFastRegion(ValueError):
    """Operation only defined when ``1 - p < 1/d`` (regions B2 and B3)."""


@dataclass
class SolveResult:
    region: Region
    delta_opt: float
    policy: ThresholdPolicy
    candidates: dict
    argmin: tuple
    thresholds: dict = field(default_factory=dict)
    beta_roots: dict = field(default_factory=dict)
    near_tie: bool = False


def _ar(lo: int, hi: int) -> np.ndarray:
    return np.arange(lo, hi + 1, dtype=float)


def _tri(lo: int, hi: int) -> float:
    """``sum_{i=lo}^{hi} i``."""
    if hi < lo:
        return 0.0
    return (lo + hi) * (hi - lo + 1) / 2.0


def _psum(p: float, lo: int, hi: int, weighted: bool) -> float:
    """``sum_{i=lo}^{hi} [i] p**(i-1)``.

    Short ranges are summed term by term; long ones (thresholds close to
    the ``1 - p = 1/d`` boundary) use the geometric closed forms.
    """
    if hi < lo:
        return 0.0
    if hi - lo < DIRECT_SUM_LIMIT:
        i = _ar(lo, hi)
        terms = p ** (i - 1)
        return float(np.sum(i * terms) if weighted else np.sum(terms))
    a, b = p ** (lo - 1), p ** hi
    if not weighted:
        return (a - b) / (1 - p)
    # d/dp of sum p**i, split at lo
    return (lo * a - (hi + 1) * b) / (1 - p) + (p * a - p * b) / (1 - p) ** 2


def in_fast_region(params: ChannelParams) -> bool:
    return 1.0 / (1.0 - params.p) - params.d > 0


def domain(i: int, params: ChannelParams) -> IntRange:
    """``N(i)`` as an integer range."""
    if i == 2:
        return IntRange(1, params.d)
    if i in (1, 3, 4):
        return IntRange(params.d + 1, None)
    raise ValueError(f"family index must be 1..4, got {i}")


def always_ch1_age(params: ChannelParams) -> float:
    p, q = params.p, params.q
    return ((1 - q) * (2 - p) + (1 - p) ** 2) / ((2 - q - p) * (1 - p))


def always_ch2_age(params: ChannelParams) -> float:
    return (3 * params.d - 1) / 2.0


def _f0_g0(params: ChannelParams) -> tuple[float, float]:
    # mu(delta,0,0)=2 everywhere, mu(1,1,0)=2, mu(d,1,0)=1; weights relative to pi(d,1,0)
    p, q, d = params.p, params.q, params.d
    mp = matrix_powers(params, d)
    D = (mp.bP * q + mp.b * (1 - q)) / (1 - mp.b)
    f = q * _tri(1, d) + d + (1 - q) * _tri(d + 1, 2 * d) + D * _tri(d, 2 * d - 1)
    g = d + 1 + D * d
    return f, g


def _f0p_g0p(params: ChannelParams) -> tuple[float, float]:
    # mu(delta,0,0)=1 everywhere, mu(delta,1,0)=2 everywhere; weights relative to pi(d,0,0)
    p, d = params.p, params.d
    mp = matrix_powers(params, d)
    f = _tri(1, d) + mp.aP / mp.bP * _tri(d, 2 * d - 1) + d / (1 - p) + p / (1 - p) ** 2
    g = d / mp.bP + 1 / (1 - p)
    return f, g


def candidate_constants(params: ChannelParams) -> dict:
    """Average ages of the four policies that need no threshold search."""
    f0, g0 = _f0_g0(params)
    f0p, g0p = _f0p_g0p(params)
    return {
        "always_ch1": always_ch1_age(params),
        "always_ch2": always_ch2_age(params),
        "f0_over_g0": f0 / g0,
        "f0p_over_g0p": f0p / g0p,
    }


def _fg_formula(i: int, s: int, params: ChannelParams) -> tuple[float, float]:
    """Unnormalized age mass ``f`` and probability mass ``g`` of family ``i``.

    Valid as chain averages on ``N(i)``; outside it the expressions are the
    smooth continuation used by the finite-difference identity.  The
    scaling of each family makes ``p**-(s-1) (f(s+1) - f(s))`` affine in
    ``s`` with slope exactly ``1 - d(1-p)``.
    """
    p, q, d = params.p, params.q, params.d
    mp = matrix_powers(params, d)
    a, b, aP, bP = mp.a, mp.b, mp.aP, mp.bP
    ps = p ** (s - 1)
    busy = _tri(s + 1, s + d - 1)
    if i == 1:
        c1 = 1 - b * p ** (s - d) - (1 - q) * a * p ** (s - d - 1)
        head_f = p / (1 - q) + _psum(p, 2, d, True)
        head_g = p / (1 - q) + _psum(p, 2, d, False)
        f = c1 * head_f + d * ps + _psum(p, d + 1, s, True) + ps * busy
        g = c1 * head_g + ps + _psum(p, d + 1, s, False) + (d - 1) * ps
    elif i == 2:
        c2 = b / (a * q)
        f = (p / (1 - q) + _psum(p, 2, s, True) + ps * busy
             + c2 * ps * _tri(d, 2 * d - 1)
             + ps * (d + (1 - q) * _tri(d + 1, 2 * d)) / q)
        g = (p / (1 - q) + _psum(p, 2, s, False) + (d - 1) * ps
             + c2 * d * ps + (d * (1 - q) + 1) * ps / q)
    elif i == 3:
        e = 1 - p ** (s - d)
        r = a / bP
        f = (e * (p / (1 - q) + _psum(p, 2, d - 1, True)) + _psum(p, d, s, True)
             + r * ps * _tri(d, 2 * d - 1) + ps * busy)
        g = (e * (p / (1 - q) + _psum(p, 2, d - 1, False)) + _psum(p, d, s, False)
             + r * d * ps + (d - 1) * ps)
    elif i == 4:
        e = 1 - p ** (s - d)
        c4 = (aP + (a - aP) * p ** (s - d)) / bP
        scale = p ** (d - 1)
        tail_f = _psum(p, d, s, True) / scale
        tail_g = _psum(p, d, s, False) / scale
        f = scale * (e * _tri(1, d) + c4 * _tri(d, 2 * d - 1) + tail_f + p ** (s - d) * busy)
        g = scale * (e * d + c4 * d + tail_g + (d - 1) * p ** (s - d))
    else:
        raise ValueError(f"family index must be 1..4, got {i}")
    return f, g


def fg_eval(i: int, s: int, params: ChannelParams) -> tuple[float, float]:
    """``(f_i(s), g_i(s))`` for ``s`` in ``N(i)``.

    For family 2 the threshold ``s = 1`` induces the same chain as
    ``s = 2`` (age 1 only occurs together with an ON channel), so both
    return the same pair.
    """
    s = int(s)
    if s not in domain(i, params):
        raise ValueError(f"s={s} outside N({i}) = {domain(i, params)}")
    if i == 2 and s == 1:
        s = 2
    return _fg_formula(i, s, params)


def table_lo(i: int, params: ChannelParams) -> tuple[float, float]:
    """Direct closed forms for ``(l_i, o_i)``, kept as a cross-check.

    Used only as a diagnostic; :func:`lo_eval` derives the values that are
    actually used.  The two normalizations differ, so disagreement is only
    logged at debug level.
    """
    p, q, d = params.p, params.q, params.d
    mp = matrix_powers(params, d)
    a, b, bP = mp.a, mp.b, mp.bP
    tail = d * (p - (1 - p) * (d - 1) / 2)
    if i == 1:
        k = -p ** (1 - d) * (b + (1 - q) * a) * (1 - p)
        l = k * (p / (1 - q) + _psum(p, 2, d, True)) + tail
        o = k * (p / (1 - q) + _psum(p, 2, d, False)) + 1 - (1 - p) * d
    elif i == 2:
        c2 = b / (a * q)
        l = (-c2 * (1 - p) * _tri(d - 1, 2 * d - 1)
             - ((1 - q) * _tri(d + 1, 2 * d) + d + 1) * (1 - p) / q + tail)
        o = p - (1 - p) * (1 + d * (1 - q)) / q - (1 - p) * d * (1 + c2)
    elif i == 3:
        i_ = _ar(2, d - 1)
        l = (p / (1 - q) + float(np.sum(i_ * p ** (i_ - d) * (1 - p)))
             - _tri(d, 2 * d - 1) * (1 - p) * a / bP + (d - 1) * (p - d * (1 - p) / 2))
        o = (p / (1 - q) + float(np.sum(p ** (i_ - d) * (1 - p)))
             + 1 - (1 - p) * (d - 1 + d * a / bP))
    elif i == 4:
        l = (-(1 - p) * _tri(1, d - 1) - _tri(d, 2 * d - 1) * (1 - p) / (1 - a)
             + (d - 1) * (p - d * (1 - p) / 2))
        o = -(1 - p) * d - (1 - p) * d / (1 - a) - (d - 1) * (1 - p) + 1
    else:
        raise ValueError(f"family index must be 1..4, got {i}")
    return l, o


def _identity_point(i: int, s: int, params: ChannelParams) -> tuple[float, float]:
    f0, g0 = _fg_formula(i, s, params)
    f1, g1 = _fg_formula(i, s + 1, params)
    scale = params.p ** -(s - 1)
    slope = 1 - params.d * (1 - params.p)
    return scale * (f1 - f0) - slope * s, scale * (g1 - g0)


@functools.lru_cache(maxsize=4096)
def lo_eval(i: int, params: ChannelParams) -> tuple[float, float]:
    """Constants ``(l_i, o_i)`` of the finite-difference identity.

    ``p**-(s-1) (f_i(s+1) - f_i(s)) = (1 - d(1-p)) s + l_i`` and
    ``p**-(s-1) (g_i(s+1) - g_i(s)) = o_i``.  Derived from the closed forms
    at three consecutive ``s`` and required to agree to 1e-8 (relative).
    """
    if not in_fast_region(params):
        raise NotFastRegion("l_i, o_i are only defined when 1 - p < 1/d")
    s0 = 1 if i == 2 else params.d + 1
    pts = [_identity_point(i, s, params) for s in (s0, s0 + 1, s0 + 2)]
    ls = [pt[0] for pt in pts]
    os_ = [pt[1] for pt in pts]
    for vals in (ls, os_):
        spread = max(vals) - min(vals)
        if spread > IDENTITY_TOL * max(1.0, max(abs(v) for v in vals)):
            raise IdentityError(f"family {i}: identity constants drift by {spread:.3g}")
    l, o = float(np.mean(ls)), float(np.mean(os_))
    lt, ot = table_lo(i, params)
    if abs(lt - l) > 1e-8 * max(1.0, abs(l)) or abs(ot - o) > 1e-8 * max(1.0, abs(o)):
        log.debug("family %d: table (l, o) = (%.6g, %.6g), derived (%.6g, %.6g)",
                  i, lt, ot, l, o)
    return l, o


def s_threshold(i: int, beta: float, params: ChannelParams) -> int:
    """Minimizer over ``N(i)`` of ``f_i(s) - beta g_i(s)``.

    The ceiling term is clamped to ``N(i)``: at least ``d + 1`` for
    families 1, 3, 4 and within ``[1, d]`` for family 2.
    """
    if beta < 0:
        raise ValueError("beta must be >= 0")
    l, o = lo_eval(i, params)
    slope = 1 - params.d * (1 - params.p)
    x = -(l - beta * o) / slope
    c = math.ceil(x) if x < THRESHOLD_GUARD else THRESHOLD_GUARD
    if i == 2:
        return max(min(c, params.d), 1)
    return max(c, params.d + 1)


def h_eval(i: int, beta: float, params: ChannelParams) -> float:
    """``h_i(beta) = f_i(s_i(beta)) - beta g_i(s_i(beta))``."""
    f, g = fg_eval(i, s_threshold(i, beta, params), params)
    return f - beta * g


def bisect_beta(i: int, params: ChannelParams, eps: float = 1e-9,
                upper: float | None = None) -> float:
    """Root of ``h_i`` on ``[0, upper]`` by bisection (default ``upper = 3d``).

    Every ratio in a family is at most ``2d`` near the lower end of its
    domain, so ``h_i(3d) < 0`` and the bracket is valid.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    lo, hi = 0.0, float(3 * params.d if upper is None else upper)
    if h_eval(i, hi, params) >= 0:
        raise BracketError(f"h_{i}({hi}) >= 0; upper bracket too small")
    beta = 0.5 * (lo + hi)
    while hi - lo >= eps:
        beta = 0.5 * (lo + hi)
        if h_eval(i, beta, params) < 0:
            hi = beta
        else:
            lo = beta
    return beta


def _family_candidate(i: int, params: ChannelParams, eps: float):
    root = bisect_beta(i, params, eps)
    s = s_threshold(i, root, params)
    if s > LARGE_THRESHOLD:
        log.warning("family %d: threshold %d exceeds %d (close to 1 - p = 1/d)",
                    i, s, LARGE_THRESHOLD)
    f, g = fg_eval(i, s, params)
    return root, s, f / g


def _pick(candidates: dict, tol: float = 1e-12):
    best = min(candidates.values())
    names = tuple(n for n in CANDIDATE_ORDER
                  if n in candidates and candidates[n] <= best + tol * max(1.0, abs(best)))
    # near ties are worth flagging: the policy choice is then fragile
    close = [n for n in candidates if candidates[n] <= best + 1e-9 * max(1.0, abs(best))]
    return best, names, len(close) > len(names) or len(names) > 1


def solve(params: ChannelParams, eps: float = 1e-9) -> SolveResult:
    """Optimal average age and an optimal threshold policy."""
    region, _ = classify_region(params)
    d = params.d
    consts = candidate_constants(params)
    roots, thresholds = {}, {}

    if region is Region.B1:
        pol = ThresholdPolicy(NI, 1, NI, 1, IntRange(1, 1), name="Age-optimal")
        cands = {"always_ch1": consts["always_ch1"]}
        return SolveResult(region, cands["always_ch1"], pol, cands, ("always_ch1",))

    if region is Region.B4:
        cands = {"f0p_over_g0p": consts["f0p_over_g0p"], "always_ch1": consts["always_ch1"]}
        best, names, tie = _pick(cands)
        if names[0] == "always_ch1":
            pol = ThresholdPolicy(NI, 1, ND, 2, IntRange(2, None), name="Age-optimal")
        else:
            pol = ThresholdPolicy(NI, 1, ND, 1, IntRange(1, 1), name="Age-optimal")
        return SolveResult(region, best, pol, cands, names, near_tie=tie)

    families = (1, 2) if region is Region.B2 else (1, 2, 3, 4)
    cands = {}
    for i in families:
        root, s, val = _family_candidate(i, params, eps)
        roots[f"beta{i}"] = root
        thresholds[f"beta{i}"] = s
        cands[f"beta{i}"] = val
    if region is Region.B2:
        cands["f0_over_g0"] = consts["f0_over_g0"]
    cands["always_ch2"] = consts["always_ch2"]
    best, names, tie = _pick(cands)
    win = names[0]

    if region is Region.B2:
        if win in ("beta1", "beta2"):
            lam0, lam1 = thresholds[win], IntRange(1, 1)
        elif win == "f0_over_g0":
            lam0, lam1 = 1, IntRange(2, d)
        else:
            lam0, lam1 = 1, IntRange(d + 1, None)
        pol = ThresholdPolicy(ND, lam0, NI, lam1.lo, lam1, name="Age-optimal")
    else:
        if win in ("beta1", "beta2"):
            lam0, lam1 = thresholds[win], IntRange(d + 1, None)
        elif win == "beta3":
            lam0, lam1 = thresholds[win], IntRange(2, d)
        elif win == "beta4":
            lam0, lam1 = thresholds[win], IntRange(1, 1)
        else:
            lam0, lam1 = 1, IntRange(1, d)
        pol = ThresholdPolicy(ND, lam0, ND, lam1.lo, lam1, name="Age-optimal")
    return SolveResult(region, best, pol, cands, names, thresholds, roots, tie)


def solve_iid(params: ChannelParams, eps: float = 1e-9) -> SolveResult:
    """Specialization for an i.i.d. Channel 1 (``p + q = 1``): one threshold suffices."""
    if not params.is_iid:
        raise ValueError(f"p + q must equal 1, got {params.p + params.q!r}")
    region, _ = classify_region(params)
    d = params.d
    if 1.0 / (1.0 - params.p) - d <= 0:
        val = 1.0 / (1.0 - params.p)
        pol = ThresholdPolicy(NI, 1, NI, 1, IntRange(1, 1), name="Age-optimal")
        return SolveResult(region, val, pol, {"always_ch1": val}, ("always_ch1",))
    root, s, val = _family_candidate(1, params, eps)
    cands = {"beta1": val, "always_ch2": always_ch2_age(params)}
    best, names, tie = _pick(cands)
    if names[0] == "beta1":
        pol = ThresholdPolicy(ND, s, ND, s, IntRange(d + 1, None), name="Age-optimal")
    else:
        pol = ThresholdPolicy(ND, 1, ND, 1, IntRange(1, d), name="Age-optimal")
    return SolveResult(region, best, pol, cands, names,
                       {"beta1": s}, {"beta1": root}, tie)


def iid_threshold(params: ChannelParams, eps: float = 1e-9) -> float:
    """Optimal single threshold for an i.i.d. channel; ``inf`` means never switch to Channel 2."""
    res = solve_iid(params, eps)
    if res.argmin[0] == "always_ch1" or res.policy.lambda0 >= THRESHOLD_GUARD:
        return math.inf
    return float(res.policy.lambda0)
