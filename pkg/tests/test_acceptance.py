"""End-to-end acceptance checks, one test per criterion."""
import math

import numpy as np
import pytest
from scipy.optimize import brentq

from hetero_aoi.chain import average_cost, build_chain, policy_average_age, stationary_distribution
from hetero_aoi.costs import ExponentialCost
from hetero_aoi.exact import (always_ch1_age, always_ch2_age, bisect_beta, candidate_constants,
                              domain, fg_eval, h_eval, iid_threshold, solve, solve_iid)
from hetero_aoi.mdp import (DIRECTIONS, check_supermodularity, check_threshold_structure,
                            idle_never_strictly_better, relative_value_iteration,
                            value_iteration_discounted)
from hetero_aoi.model import ChannelParams, Region, classify_region, classify_region_discounted
from hetero_aoi.policy import Direction, ThresholdPolicy, always_ch1, always_ch2
from hetero_aoi.simulate import SimConfig, compare_policies, simulate

pytestmark = pytest.mark.slow

ND, NI = Direction.NON_DECREASING, Direction.NON_INCREASING
GRID_DS = (2, 3, 5, 10, 20)
PER_REGION = 20
MARGIN = 0.05


def region_grid(seed=2024, ds=GRID_DS, per_region=PER_REGION, regions=tuple(Region)):
    """Seeded rejection sample of ``per_region`` triples per region, cycling through ``ds``.

    Triples within ``MARGIN`` of a boundary that defines their region are redrawn.
    """
    rng = np.random.default_rng(seed)
    out = {}
    for r in regions:
        pts = []
        while len(pts) < per_region:
            d = ds[len(pts) % len(ds)]
            p, q = rng.uniform(0.01, 0.99, 2)
            pr = ChannelParams(float(p), float(q), d)
            reg, (F, G, H) = classify_region(pr)
            if reg is not r:
                continue
            edges = (F, H) if r in (Region.B1, Region.B4) else (F, G)
            if min(abs(v) for v in edges) < MARGIN:
                continue
            pts.append(pr)
        out[r] = pts
    return out


def family_policy(i, s):
    if i in (1, 2):
        return ThresholdPolicy(ND, s, NI, 1)
    if i == 3:
        return ThresholdPolicy(ND, s, ND, 2)
    return ThresholdPolicy(ND, s, ND, 1)


def geometric_cap(p, extra):
    # ages beyond this carry less than 1e-18 of the mass of a run of OFF slots
    return int(math.log(1e-18) / math.log(p)) + extra


@pytest.fixture(scope="module")
def rvi_grid():
    rows = []
    for region, pts in region_grid().items():
        for pr in pts:
            rows.append((region, pr, solve(pr), relative_value_iteration(pr, age_cap=2000)))
    return rows


def test_criterion_1_closed_form_vs_rvi(rvi_grid, report):
    errs = {r: [] for r in Region}
    for region, pr, res, sol in rvi_grid:
        errs[region].append(abs(res.delta_opt - sol.gain) / sol.gain)
    counts = {r.value: len(v) for r, v in errs.items()}
    worst = max(max(v) for v in errs.values())
    ds = {pr.d for _, pr, _, _ in rvi_grid}
    ok = worst < 1e-3 and min(counts.values()) >= 20 and ds == set(GRID_DS)
    report(1, ok, f"max rel err {worst:.2e} over {counts}")
    assert ok


def test_criterion_2_fg_vs_chain(report):
    worst, n = 0.0, 0
    for d in (2, 3, 5, 10):
        for p, q in ((0.5, 0.5), (0.8, 0.3), (0.93, 0.4), (0.95, 0.05), (0.97, 0.7)):
            pr = ChannelParams(p, q, d)
            for i in (1, 2, 3, 4):
                dom = domain(i, pr)
                hi = min(dom.hi or 3 * d, 3 * d)
                for s in range(dom.lo, hi + 1):
                    f, g = fg_eval(i, s, pr)
                    chain = policy_average_age(family_policy(i, s), pr, age_cap=max(60, 6 * d))
                    worst = max(worst, abs(f / g - chain))
                    n += 1
            consts = candidate_constants(pr)
            cap = geometric_cap(pr.p, 4 * d)
            ref = {
                "f0_over_g0": policy_average_age(ThresholdPolicy(ND, 1, NI, 2), pr, 4 * d),
                "f0p_over_g0p": policy_average_age(ThresholdPolicy(NI, 1, ND, 1), pr, cap,
                                                   strict=False),
                "always_ch1": policy_average_age(always_ch1(), pr, cap, strict=False),
                "always_ch2": policy_average_age(always_ch2(), pr, 4 * d),
            }
            for name, val in ref.items():
                worst = max(worst, abs(consts[name] - val))
                n += 1
    ok = worst < 1e-9
    report(2, ok, f"max abs err {worst:.2e} over {n} ratios")
    assert ok


def test_criterion_3_bisection_vs_brute_force(report):
    worst, n, shape_ok = 0.0, 0, True
    grid = region_grid(seed=7, ds=(2, 5, 10), regions=(Region.B2, Region.B3))
    for pts in grid.values():
        for pr in pts:
            d = pr.d
            for i in (1, 2, 3, 4):
                dom = domain(i, pr)
                hi = min(dom.hi or 50 * d, 50 * d)
                brute = min(np.divide(*fg_eval(i, s, pr)) for s in range(dom.lo, hi + 1))
                beta = bisect_beta(i, pr)
                worst = max(worst, abs(beta - brute))
                n += 1
                bs = np.linspace(0.0, 3.0 * d, 61)
                h = np.array([h_eval(i, b, pr) for b in bs])
                scale = max(1.0, float(np.max(np.abs(h))))
                decreasing = np.all(np.diff(h) < 0)
                concave = np.all(np.diff(h, 2) <= 1e-9 * scale)
                step = 1e-7
                jumps = [abs(h_eval(i, b + step, pr) - h_eval(i, b, pr)) for b in bs[::10]]
                continuous = max(jumps) < 1e-3
                shape_ok &= bool(decreasing and concave and continuous)
    ok = worst < 1e-7 and shape_ok
    report(3, ok, f"max |beta - brute| {worst:.2e} over {n} roots; h shape ok={shape_ok}")
    assert ok


def _agrees_on_recurrent_states(sol, pol, pr):
    stat = stationary_distribution(build_chain(pol, pr, sol.age_cap, strict=False))
    top = int(0.95 * sol.age_cap)
    # the start state (1, 1, 0) is transient under always-Channel-2
    states = [s for s, w in zip(stat.states, stat.pi)
              if w > 1e-14 and s.l2 == 0 and s.delta <= top]
    return all(sol.action(s.delta, s.l1) is pol(s.delta, s.l1) for s in states)


def test_criterion_4_threshold_structure(rvi_grid, report):
    structured, unique, matched = 0, 0, 0
    for region, pr, res, sol in rvi_grid:
        rep = check_threshold_structure(sol, pr)
        assert rep.expected == DIRECTIONS[region]
        structured += rep.matches
        if res.near_tie:
            continue
        unique += 1
        pol = res.policy
        if res.argmin[0].startswith("beta"):
            hit = rep.thresholds[0] == pol.lambda0 and rep.thresholds[1] in pol.lambda1_set
        else:
            # constant optima leave thresholds free at unreachable states
            hit = _agrees_on_recurrent_states(sol, pol, pr)
        matched += hit
    frac = structured / len(rvi_grid)
    ok = frac >= 0.95 and matched == unique
    report(4, ok, f"threshold structure on {frac:.1%}; lambda match {matched}/{unique}")
    assert ok


C5_POINTS = [(0.3, 0.6, 3), (0.5, 0.2, 5), (0.7, 0.6, 2), (0.8, 0.4, 3), (0.93, 0.4, 5),
             (0.7, 0.2, 2), (0.9, 0.1, 3), (0.95, 0.05, 5), (0.4, 0.1, 2), (0.78, 0.08, 5)]


def test_criterion_5_supermodularity(report):
    alpha = 0.999
    worst, sign_ok, regions = 0.0, True, set()
    for p, q, d in C5_POINTS:
        pr = ChannelParams(p, q, d)
        sol = value_iteration_discounted(pr, alpha, age_cap=500, tol=1e-7, stopping="mcqueen")
        rep = check_supermodularity(sol, pr)
        regions.add(classify_region_discounted(pr, alpha))
        worst = max(worst, rep.max_dev_ch2)
        sign_ok &= rep.l01_ok
    ok = worst < 1e-6 and sign_ok and regions == set(Region)
    report(5, ok, f"max |L2 - m| {worst:.2e}; L(delta,0,1) sign ok={sign_ok}; "
                  f"regions {sorted(r.value for r in regions)}")
    assert ok


def test_criterion_6_iid(report):
    ok = True
    notes = []
    for d in (10, 20, 50):
        p_star = 1 - 1 / d
        low = [p for p in np.arange(1, 100) / 100 if 1 - p >= 1 / d]
        for p in low:
            res = solve_iid(ChannelParams(p, 1 - p, d))
            ok &= res.argmin == ("always_ch1",)
            ok &= abs(res.delta_opt - 1 / (1 - p)) <= 1e-12 * res.delta_opt
            ok &= math.isinf(iid_threshold(ChannelParams(p, 1 - p, d)))
        ok &= math.isinf(iid_threshold(ChannelParams(p_star, 1 - p_star, d)))
        # blow-up as p decreases to p*
        near = [iid_threshold(ChannelParams(p_star + e, 1 - p_star - e, d))
                for e in (1e-2, 1e-3, 1e-4, 1e-5)]
        ok &= all(math.isfinite(x) for x in near)
        # roughly 1 / (p - p*): each tenfold step toward p* multiplies the threshold
        ok &= all(b >= 5 * a for a, b in zip(near, near[1:]))
        # non-increasing above p*, down to always Channel 2
        high = np.linspace(p_star + 1e-3, 0.999, 60)
        lam = [iid_threshold(ChannelParams(p, 1 - p, d)) for p in high]
        ok &= all(a >= b for a, b in zip(lam, lam[1:])) and lam[-1] == 1
        notes.append(f"d={d}: p*={p_star:g}, lambda(p*+1e-5)={near[-1]:g}")
    report(6, ok, "; ".join(notes))
    assert ok


C7_POINTS = [(0.5, 0.5, 5), (0.93, 0.4, 5), (0.95, 0.05, 10), (0.895, 0.02, 10), (0.97, 0.6, 10)]


def test_criterion_7_simulation(report):
    cfg = SimConfig(horizon=1_000_000, replications=20, seed=0)
    worst_z = 0.0
    for p, q, d in C7_POINTS:
        pr = ChannelParams(p, q, d)
        pol = solve(pr).policy
        cap = max(pol.lambda0, 4 * d) + geometric_cap(p, 4 * d)
        exact = policy_average_age(pol, pr, cap, strict=False)
        sim = simulate(pol, pr, config=cfg)
        worst_z = max(worst_z, abs(sim.mean - exact) / sim.std_error)
    ch2_ok = True
    for d in (2, 5, 10, 20):
        pr = ChannelParams(0.7, 0.4, d)
        res = simulate(always_ch2(), pr, config=SimConfig(1_000_000, 20, warmup=100 * d))
        ch2_ok &= res.mean == (3 * d - 1) / 2 and all(v == res.mean for v in res.per_replication)
    ok = worst_z < 3 and ch2_ok
    report(7, ok, f"max |z| {worst_z:.2f} over {len(C7_POINTS)} points; always-Ch2 exact={ch2_ok}")
    assert ok


def balanced_p(q, d):
    """``p`` at which always-Channel-1 and always-Channel-2 give the same average age."""
    def gap(p):
        pr = ChannelParams(p, q, d)
        return always_ch1_age(pr) - always_ch2_age(pr)
    return brentq(gap, 0.5, 0.999, xtol=1e-14)


Q_SWEEP = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


def test_criterion_8_policy_comparison(report):
    d = 20
    cfg = SimConfig(horizon=1_000_000, replications=20, seed=0)
    order_ok = True
    for q in Q_SWEEP:
        pr = ChannelParams(balanced_p(q, d), q, d)
        opt, *base = compare_policies(pr, config=cfg)
        for b in base:
            order_ok &= opt.mean <= b.mean + 3 * math.hypot(opt.std_error, b.std_error)
    p = 0.9
    eta = 1 / (p - 0.003)
    cost = ExponentialCost(eta)
    ratio_ok, worst = eta * p >= 1, math.inf
    for q in Q_SWEEP:
        pr = ChannelParams(p, q, d)
        opt, _, ch2, rnd = compare_policies(pr, cost, cfg)
        upper = opt.mean + 3 * opt.std_error
        # clamping the age only lowers the cost, so the truncated chain is a lower bound
        mm_lb = average_cost(stationary_distribution(build_chain(always_ch1(), pr, 200,
                                                                 strict=False)), cost)
        lows = [mm_lb, ch2.mean - 3 * ch2.std_error, rnd.mean - 3 * rnd.std_error]
        worst = min(worst, min(lows) / upper)
        ratio_ok &= min(lows) > 2 * upper
    ok = order_ok and ratio_ok
    report(8, ok, f"ordering over q sweep ok={order_ok}; min baseline/optimal ratio {worst:.2f} "
                  f"(eta*p={eta * p:.4f})")
    assert ok


def test_criterion_9_idle_never_needed(report):
    checked, ok = 0, True
    for p, q, d in [(0.3, 0.6, 2), (0.5, 0.2, 3), (0.8, 0.4, 3), (0.93, 0.4, 5), (0.9, 0.1, 4),
                    (0.95, 0.05, 5), (0.4, 0.1, 2), (0.78, 0.08, 5)]:
        pr = ChannelParams(p, q, d)
        avg = relative_value_iteration(pr, age_cap=200, unrestricted=True)
        disc = value_iteration_discounted(pr, 0.99, age_cap=200, tol=1e-8, unrestricted=True)
        ok &= idle_never_strictly_better(avg) and idle_never_strictly_better(disc)
        checked += 2
    report(9, ok, f"{checked} unrestricted tables, idle never the unique minimizer")
    assert ok
