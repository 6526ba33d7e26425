"""European calls in a regime-switching market with lognormal-type jumps.

Simulation draws the exact log price; the PIDE is solved in log space.
The two should agree within a few standard errors.
"""

from switchkac import SimParams
from switchkac import pricing as pr
from switchkac.levy import CompoundPoisson

market = pr.MarketSpec([0.03, 0.06], [0.15, 0.35], [[-1.0, 1.0], [2.0, -2.0]], 100.0,
                       CompoundPoisson.normal(1.0, -0.1, 0.2), pr.relative_jump([0.5, 1.0]))
surface = pr.price_european_pide(market, pr.call(100.0), 1.0, n_nodes=401)

for i in (0, 1):
    e = pr.price_european_mc(market, pr.call(100.0), 0.0, 100.0, i, 1.0, SimParams(1.0, 1.0, seed=i), 100_000)
    print(f"regime {i}: mc {e.mean:.4f} +- {e.std_error:.4f}   pide {surface.price(0.0, 100.0, i):.4f}")

print("Black-Scholes sanity value:", round(pr.black_scholes_call(100, 100, 0.05, 0.2, 1.0), 6))
