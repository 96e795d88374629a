"""Resonance ledger and the amplitude equation's blow-up structure.

Sweeps epsilon, solving the amplitude equation with a fixed smooth forcing;
the response explodes exactly at the ledger's critical values
eps_j = sqrt(lambda0) ell / (j pi). Writes the (eps, margin, amplitude)
table and marks the predicted locations.
"""

import numpy as np

from curvelayers import harness, reduced

rows = harness.gap_sweep(3.0, 0.09, 0.32, n=240, c=0.025, outdir=".")
lam_star = 3.0 / np.pi**2
print(f"lambda* = {lam_star:.6f}")
print("predicted critical values:", [f"{np.sqrt(lam_star)/j:.4f}" for j in range(2, 7)])

sup = rows[:, 2]
for j in range(2, 7):
    r = np.sqrt(lam_star) / j
    i = int(np.argmin(np.abs(rows[:, 0] - r)))
    print(f"j = {j}: eps_j = {r:.5f}, swept response nearby = {np.max(sup[max(0, i-2):i+3]):.1f}")

led = reduced.gap_check(0.1, 0.5, 3.0, 1.0)
print(f"\ngap check at eps = 0.1, c = 0.5: margin {led.margin:.4f} -> {'pass' if led.passes else 'fail'}")
eps5 = np.sqrt(lam_star) / 5
led5 = reduced.gap_check(eps5, 0.5, 3.0, 1.0)
print(f"gap check at eps = eps_5 = {eps5:.5f}: margin {led5.margin:.1e} -> {'pass' if led5.passes else 'fail'}")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4))
    ax.semilogy(rows[:, 0], rows[:, 2])
    for j in range(2, 7):
        ax.axvline(np.sqrt(lam_star) / j, color="r", ls=":", lw=0.8)
    ax.set_xlabel("epsilon")
    ax.set_ylabel("amplitude response (sup)")
    ax.set_title("resonance structure of the amplitude equation")
    fig.tight_layout()
    fig.savefig("demos_resonance.png", dpi=120)
    print("wrote demos_resonance.png")
except ImportError:
    print("matplotlib not available; skipped the plot")
