"""
Region map for d = 10
=====================

Each character is one (p, q) cell: 1-4 for regions B1-B4.
p grows to the right, q grows upward.
"""
import numpy as np

from hetero_aoi import ChannelParams, classify_region

d = 10
ps = np.linspace(0.80, 0.99, 60)
qs = np.linspace(0.005, 0.3, 24)

for q in qs[::-1]:
    row = "".join(classify_region(ChannelParams(p, q, d))[0].value[1] for p in ps)
    print(f"q={q:4.2f} {row}")
print(f"       p from {ps[0]:.2f} to {ps[-1]:.2f}")
