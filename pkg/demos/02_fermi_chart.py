"""Modified Fermi charts and their expansion orders.

The disk-diameter chart has closed-form metric entries; the quadratic
expansions of the drift coefficients and of the boundary normal are checked
against the exact values, and the measured remainder orders printed.
"""

import numpy as np

from curvelayers import geometry as ge
from curvelayers.util import loglog_slope

disk = ge.build_chart(ge.disk_diameter_curve(), delta0=0.35)
print(f"disk diameter: k1 = {disk.k1}, k2 = {disk.k2}")
print(f"boundary constants: b1 = {disk.b1}, b2 = {disk.b2}, b3 = {disk.b3}, b4 = {disk.b4}")

ts = np.linspace(0.02, 0.2, 8) * disk.delta0
th = 0.37
for key in ("g11", "g22", "sqrtg"):
    rem = []
    for t in ts:
        met = disk.metric(np.array([t]), np.array([th]))
        lead = ge.metric_leading(disk, np.array([t]), np.array([th]))
        rem.append(abs(met[key][0] - lead[key][0]))
    if max(rem) < 1e-13:
        print(f"{key}: leading form exact to rounding")
    else:
        print(f"{key}: remainder order {loglog_slope(ts, rem)[0]:.2f}")

for end in (0, 1):
    k_end, (bt, bth), samples = disk.normal_operator_coeffs(end)
    slope = loglog_slope(samples[:, 0], np.abs(samples[:, 1]))[0]
    print(f"normal expansion at end {end}: constants ({k_end}, {bt}, {bth}), remainder order {slope:.2f}")

gen = ge.build_chart(ge.generic_chart_curve(), delta0=0.3)
print(f"\ngeneric curved chart: k1 = {gen.k1}, k2 = {gen.k2}, b1..b4 = "
      f"({gen.b1:.3f}, {gen.b2:.3f}, {gen.b3:.3f}, {gen.b4:.3f})")
_, _, samples = gen.normal_operator_coeffs(0)
print(f"generic normal remainder order: {loglog_slope(samples[:, 0], np.abs(samples[:, 1]))[0]:.2f}")
