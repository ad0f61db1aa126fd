"""
Optimal threshold for an i.i.d. mmWave channel
==============================================

With q = 1 - p a single age threshold decides when to fall back to the
slow channel.  Below p* = 1 - 1/d the fast channel is always used; just
above p* the threshold is huge and it falls toward 1 as p approaches 1.
"""
import numpy as np

from hetero_aoi import ChannelParams
from hetero_aoi.exact import iid_threshold

for d in (10, 20, 50):
    p_star = 1 - 1 / d
    print(f"d = {d}, p* = {p_star:.2f}")
    for p in np.r_[p_star - 0.05, p_star, p_star + np.array([1e-4, 1e-3, 1e-2]), 0.995]:
        if not 0 < p < 1:
            continue
        lam = iid_threshold(ChannelParams(float(p), float(1 - p), d))
        print(f"  p={p:.4f}  threshold={lam:g}")
