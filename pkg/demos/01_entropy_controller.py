"""
What the entropy controller does to one output distribution
===========================================================

The controller multiplies the student's logits by a positive alpha before
the softmax. Raising alpha sharpens the distribution (lower entropy),
lowering it flattens it. The probability-weighted mean logit moves from
the plain average of the logits (alpha -> 0) to their maximum (alpha -> inf).
"""
import numpy as np

from dynkd import losses

z = np.array([2.0, 0.5, -1.0, 0.0])
print("logits", z, " mean", z.mean(), " max", z.max())

# %% sweep alpha at temperature 1
print(f"\n{'alpha':>8} {'entropy':>9} {'wmean':>9}  distribution")
for a in [1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 50.0]:
    p = losses.soften(z, 1.0, a)
    h = losses.output_entropy(z, 1.0, a)
    w = losses.weighted_mean(z, 1.0, a)
    print(f"{a:8.3g} {h:9.5f} {w:9.5f}  {np.round(p, 4)}")

print("\nupper bound ln m =", np.log(len(z)))

# %% temperature and alpha act through the same ratio alpha / T
p1 = losses.soften(z, 4.0, 2.0)
p2 = losses.soften(z, 2.0, 1.0)
print("\nsoften(z, T=4, alpha=2) == soften(z, T=2, alpha=1):", np.allclose(p1, p2))

# %% the slope of the weighted mean is the softened variance / T, always positive
for a in [0.1, 1.0, 10.0]:
    print(f"d wmean / d alpha at alpha={a:<5}: {losses.weighted_mean_slope(z, 1.0, a):.6f}")
