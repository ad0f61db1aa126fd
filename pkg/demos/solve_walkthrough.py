"""
One closed-form solve, checked two ways
=======================================

The closed form picks the best of several candidate policies.  Its value
is compared with the stationary distribution of the chosen policy and
with relative value iteration on the truncated MDP.
"""
from hetero_aoi import ChannelParams, solve
from hetero_aoi.chain import policy_average_age
from hetero_aoi.mdp import check_threshold_structure, relative_value_iteration

params = ChannelParams(p=0.93, q=0.4, d=10)
res = solve(params)

print("region:", res.region.value)
for name, value in sorted(res.candidates.items(), key=lambda kv: kv[1]):
    mark = "*" if name in res.argmin else " "
    print(f" {mark} {name:<13} {value:.10f}")

pol = res.policy
print(f"policy: {pol.dir0.value} lambda0={pol.lambda0}, {pol.dir1.value} lambda1 in {pol.lambda1_set}")

# same number from the induced Markov chain
chain_age = policy_average_age(pol, params, age_cap=400)
print(f"chain average age   {chain_age:.10f}")

# and from dynamic programming, which knows nothing about thresholds
sol = relative_value_iteration(params, age_cap=400)
print(f"RVI gain            {sol.gain:.10f}  ({sol.iterations} sweeps)")
rep = check_threshold_structure(sol, params)
print("greedy thresholds:", rep.thresholds)
