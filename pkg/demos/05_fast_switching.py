"""Fast switching and what survives in the limit.

As the chain speeds up the switched path converges in law to a diffusion with
averaged volatility, yet the pathwise L2 gap to that diffusion does not vanish.
The positive-half-line occupation time follows the arcsine law when the
volatility is regime-blind.
"""

import numpy as np

from switchkac import averaging as avg
from switchkac.model import ModelSpec, constant, constant_generator

s1, s2, q = 1.0, 2.0, 1.0
print("L2 gap E|X - Xbar|^2 at t = 1")
for eps in (0.1, 0.01, 0.001):
    mean, se = avg.l2_gap_mc(s1, s2, q, q, 1.0, eps, 50_000, seed=7)
    print(f"  eps={eps:<6} mc {mean:.4f} +- {se:.4f}   formula {avg.l2_gap_formula(s1, s2, q, q, 1.0, eps):.4f}")

base = ModelSpec(1, 2, constant([0.0, 0.0]), constant([1.0, 1.0], kind="diffusion"),
                 constant_generator([[-1.0, 1.0], [1.0, -1.0]]), 1.0, name="flat")
spec = avg.TwoTimeScaleSpec(base, 0.05)
xi = avg.occupation_samples(spec, avg.OccupationSpec.positive_half_line(), 0.0, 0, 20.0, 0.02, 4000, seed=1)
print(f"occupation KS vs arcsine with {len(xi)} paths: {avg.ks_statistic(xi, avg.arcsine_cdf):.4f}")
print("quantiles", np.round(np.quantile(xi, [0.1, 0.5, 0.9]), 3))

