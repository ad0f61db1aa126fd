import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hetero_aoi.model import (Action, ChannelParams, InadmissibleAction, InvalidParameters,
                              Region, SystemState, admissible_actions, classify_region,
                              classify_region_discounted, matrix_powers, near_boundary,
                              region_functions, region_functions_discounted, transition)

probs = st.floats(min_value=1e-3, max_value=1 - 1e-3)
ds = st.integers(min_value=2, max_value=60)


def as_dict(dist):
    out = {}
    for s, w in dist:
        out[s] = out.get(s, 0.0) + w
    return out


@pytest.mark.parametrize("p,q,d", [(0, 0.5, 3), (1, 0.5, 3), (0.5, 0, 3), (0.5, 1.0, 3),
                                   (0.5, 0.5, 1), (0.5, 0.5, 2.5), (0.5, 0.5, True)])
def test_invalid_params_rejected(p, q, d):
    with pytest.raises(InvalidParameters):
        ChannelParams(p, q, d)


def test_ch1_from_off_state():
    pr = ChannelParams(0.4, 0.7, 3)
    got = as_dict(transition(SystemState(5, 0, 0), Action.CH1, pr))
    assert got == pytest.approx({SystemState(1, 1, 0): 0.6, SystemState(6, 0, 0): 0.4})


def test_ch1_from_on_state():
    pr = ChannelParams(0.4, 0.7, 3)
    got = as_dict(transition(SystemState(5, 1, 0), Action.CH1, pr))
    assert got == pytest.approx({SystemState(1, 1, 0): 0.7, SystemState(6, 0, 0): 0.3})


def test_ch2_starts_service():
    pr = ChannelParams(0.4, 0.7, 4)
    got = as_dict(transition(SystemState(5, 0, 0), Action.CH2, pr))
    assert got == pytest.approx({SystemState(6, 1, 3): 0.6, SystemState(6, 0, 3): 0.4})


@pytest.mark.parametrize("l1", [0, 1])
def test_delivery_sets_age_to_d(l1):
    pr = ChannelParams(0.4, 0.7, 6)
    got = as_dict(transition(SystemState(5, l1, 1), Action.NONE, pr))
    on = pr.on_prob(l1)
    assert got == pytest.approx({SystemState(6, 1, 0): on, SystemState(6, 0, 0): 1 - on})


def test_busy_countdown():
    pr = ChannelParams(0.4, 0.7, 6)
    got = as_dict(transition(SystemState(9, 1, 4), Action.NONE, pr))
    assert got == pytest.approx({SystemState(10, 1, 3): 0.7, SystemState(10, 0, 3): 0.3})


def test_age_clamped_at_cap():
    pr = ChannelParams(0.4, 0.7, 3)
    got = as_dict(transition(SystemState(50, 0, 0), Action.CH1, pr, age_cap=50))
    assert SystemState(50, 0, 0) in got


def test_inadmissible_actions():
    pr = ChannelParams(0.4, 0.7, 3)
    with pytest.raises(InadmissibleAction):
        transition(SystemState(5, 0, 0), Action.NONE, pr)
    with pytest.raises(InadmissibleAction):
        transition(SystemState(5, 0, 2), Action.CH1, pr)
    with pytest.raises(InadmissibleAction):
        transition(SystemState(5, 0, 2), Action.CH2, pr)


def test_unrestricted_idle_at_free_channel():
    pr = ChannelParams(0.4, 0.7, 3)
    got = as_dict(transition(SystemState(5, 0, 0), Action.NONE, pr, unrestricted=True))
    assert got == pytest.approx({SystemState(6, 1, 0): 0.6, SystemState(6, 0, 0): 0.4})


@pytest.mark.parametrize("s", [SystemState(0, 0, 0), SystemState(3, 2, 0), SystemState(3, 0, 3)])
def test_state_out_of_bounds(s):
    with pytest.raises(ValueError):
        transition(s, Action.NONE, ChannelParams(0.4, 0.7, 3))


def test_cap_must_exceed_d():
    with pytest.raises(ValueError):
        transition(SystemState(1, 0, 0), Action.CH1, ChannelParams(0.4, 0.7, 5), age_cap=5)


@pytest.mark.parametrize("d", [2, 3, 4, 5, 6])
def test_transitions_normalized_and_marginal_exhaustive(d):
    pr = ChannelParams(0.37, 0.81, d)
    for delta, l1, l2 in itertools.product(range(1, 51), (0, 1), range(d)):
        s = SystemState(delta, l1, l2)
        for u in admissible_actions(s, unrestricted=True):
            dist = transition(s, u, pr, age_cap=60, unrestricted=True)
            assert sum(w for _, w in dist) == pytest.approx(1.0, abs=1e-15)
            on = sum(w for t, w in dist if t.l1 == 1)
            assert on == pytest.approx(pr.P[l1, 1], abs=1e-15)


@given(probs, probs, ds)
def test_regions_partition(p, q, d):
    F, G, H = region_functions(ChannelParams(p, q, d))
    hits = [F <= 0 and H <= 0, F > 0 and G <= 0, F > 0 and G > 0, F <= 0 and H > 0]
    assert sum(hits) == 1


def test_classify_examples():
    region, (F, G, H) = classify_region(ChannelParams(0.5, 0.5, 10))
    assert region is Region.B1 and (F, G, H) == (-8.0, -4.0, -8.0)
    region, (F, G, H) = classify_region(ChannelParams(0.95, 0.05, 10))
    assert region is Region.B3
    assert F == pytest.approx(10.0) and G == pytest.approx(0.5)


def test_d10_layout():
    # one point in each cell of the d = 10 partition
    assert classify_region(ChannelParams(0.3, 0.5, 10))[0] is Region.B1
    assert classify_region(ChannelParams(0.95, 0.5, 10))[0] is Region.B2
    assert classify_region(ChannelParams(0.95, 0.02, 10))[0] is Region.B3
    assert classify_region(ChannelParams(0.895, 0.02, 10))[0] is Region.B4


def test_boundary_ties_assigned_by_sign():
    # F = 1/(1-0.5) - 2 = 0 exactly -> F <= 0 side
    pr = ChannelParams(0.5, 0.5, 2)
    region, (F, _, H) = classify_region(pr)
    assert F == 0.0 and region in (Region.B1, Region.B4)
    assert near_boundary(pr)


def test_discounted_examples():
    assert classify_region_discounted(ChannelParams(0.5, 0.5, 10), 0.99) is Region.B1
    F, _, _ = region_functions_discounted(ChannelParams(0.5, 0.5, 2), 0.5)
    assert F == pytest.approx(4 / 3 - 3 / 2)
    with pytest.raises(ValueError):
        classify_region_discounted(ChannelParams(0.5, 0.5, 2), 1.0)


@settings(max_examples=300)
@given(probs, probs, st.integers(min_value=2, max_value=20))
def test_discounted_region_converges(p, q, d):
    pr = ChannelParams(p, q, d)
    if min(abs(v) for v in region_functions(pr)) <= 0.01:
        return
    assert classify_region_discounted(pr, 0.9999) is classify_region(pr)[0]


def test_matrix_powers_small_k():
    pr = ChannelParams(0.3, 0.8, 4)
    m0 = matrix_powers(pr, 0)
    assert (m0.a, m0.b, m0.aP, m0.bP) == (0.0, 1.0, 1.0, 0.0)
    m1 = matrix_powers(pr, 1)
    assert (m1.a, m1.b, m1.aP, m1.bP) == pytest.approx((0.7, 0.3, 0.8, 0.2))


@given(probs, probs)
def test_matrix_powers_rows_stochastic(p, q):
    pr = ChannelParams(p, q, 2)
    for k in range(65):
        m = matrix_powers(pr, k)
        assert m.a + m.b == pytest.approx(1.0, abs=1e-12)
        assert m.aP + m.bP == pytest.approx(1.0, abs=1e-12)
        assert all(-1e-15 <= v <= 1 + 1e-15 for v in (m.a, m.b, m.aP, m.bP))


def test_matrix_powers_match_numpy():
    pr = ChannelParams(0.3, 0.8, 4)
    P = np.array([[0.8, 0.2], [0.7, 0.3]])
    M = np.linalg.matrix_power(P, 7)
    m = matrix_powers(pr, 7)
    assert (m.aP, m.bP, m.a, m.b) == pytest.approx(tuple(M.ravel()))
