"""
Age-optimal against three fixed rules
=====================================

For each q the OFF persistence p is set so that always-mmWave and
always-sub-6GHz have the same average age; the optimal policy then has
room to beat both.  A second pass uses the exponential penalty
``(1 / (p - 0.003)) ** age`` at p = 0.9.
"""
from scipy.optimize import brentq

from hetero_aoi import ChannelParams
from hetero_aoi.costs import ExponentialCost
from hetero_aoi.exact import always_ch1_age, always_ch2_age
from hetero_aoi.simulate import SimConfig, compare_policies

d = 20
cfg = SimConfig(horizon=200_000, replications=5, seed=1)


def balanced_p(q):
    return brentq(lambda p: always_ch1_age(ChannelParams(p, q, d))
                  - always_ch2_age(ChannelParams(p, q, d)), 0.5, 0.999)


print("linear age, d = 20")
print("   q       p    Age-optimal  mmWave  sub-6GHz  Random")
for q in (0.1, 0.3, 0.5, 0.7, 0.9):
    p = balanced_p(q)
    res = compare_policies(ChannelParams(p, q, d), config=cfg)
    print(f"{q:4.1f}  {p:.4f}  " + "  ".join(f"{r.mean:8.3f}" for r in res))

p = 0.9
cost = ExponentialCost(1 / (p - 0.003))
print("\nexponential penalty, p = 0.9, d = 20")
print("   q   Age-optimal  mmWave  sub-6GHz  Random")
for q in (0.1, 0.5, 0.9):
    res = compare_policies(ChannelParams(p, q, d), cost, cfg)
    print(f"{q:4.1f}  " + "  ".join(f"{r.mean:9.3f}" for r in res))

# eta * p > 1 here, so the mmWave column is a heavy-tailed sample mean of
# a quantity whose expectation is infinite.
