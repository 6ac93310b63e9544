"""Fit the two-component beta mixture to synthetic wrong-event values and show
how the clean posterior and the difficulty coefficient vary across (0, 1).

    python demos/fit_mixture.py
"""

import numpy as np

from wrongevent import BetaMixture, difficulty, fit_bmm, posterior

rng = np.random.default_rng(0)
n = 5000
# 60% clean samples with few wrong events, 40% noisy ones with many
x = np.where(rng.random(n) < 0.6, rng.beta(2, 10, n), rng.beta(8, 3, n))

mix = fit_bmm(x, BetaMixture.default())
(c1, c2), (m1, m2) = mix.comps, mix.weights
print(f"clean  Beta({c1.alpha:.3f}, {c1.beta:.3f})  mean {c1.mean:.4f}  weight {m1:.4f}   (true 0.1667, 0.6)")
print(f"noisy  Beta({c2.alpha:.3f}, {c2.beta:.3f})  mean {c2.mean:.4f}  weight {m2:.4f}   (true 0.7273, 0.4)")

print("\n     w    tau1     eps")
for w in (0.01, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99):
    t1, _ = posterior(mix, w)
    print(f"{w:6.2f}  {float(t1):.4f}  {float(difficulty(mix, w)):.4f}")

# easy samples sit in the outer tails, hard ones in the trough between components
lo, hi = np.percentile(x, [1, 99])
print(f"\neps at 1st/99th percentile: {float(difficulty(mix, lo)):.4f} / {float(difficulty(mix, hi)):.4f}")
