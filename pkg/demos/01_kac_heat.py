"""Killed Brownian motion: Monte Carlo against the PIDE solver.

We price u(t, x) = E[exp(-int_0^t c(X)) f(X_t)] for standard Brownian motion
with a small Gaussian killing rate, once by simulation and once by solving
the backward heat equation with a potential on a grid.
"""

import numpy as np

from switchkac import (Grid1D, HybridState, ModelSpec, ScalarField, SimParams,
                       estimate_initial_value, solve_cauchy)
from switchkac.model import constant, constant_generator

bm = ModelSpec(1, 1, constant([0.0]), constant([1.0], kind="diffusion"),
               constant_generator([[0.0]]), 0.0, name="bm")
kill = ScalarField(lambda x, i: 0.5 * np.exp(-x[:, 0] ** 2))
f = ScalarField(lambda x, i: np.exp(-x[:, 0] ** 2 / 2))
t = 1.0

sol = solve_cauchy(bm, Grid1D(-10.0, 10.0, 801), kill, f, t)
print(f"{'x':>5} {'mc':>9} {'se':>8} {'pide':>9}")
for k, x in enumerate([-1.0, 0.0, 0.5, 1.5]):
    e = estimate_initial_value(bm, kill, f, t, HybridState([x], 0),
                               SimParams(t, 0.01, seed=1, stream_id=k), 40_000)
    print(f"{x:5.1f} {e.mean:9.5f} {e.std_error:8.5f} {sol.value(t, x, 0):9.5f}")
