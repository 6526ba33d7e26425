"""Exit problems on an interval.

For Brownian motion on (-1, 1) the mean exit time from x is 1 - x^2.
Simulation uses a Brownian-bridge crossing test so the step size does not
bias the exit time much.
"""

from switchkac import Box, DirichletProblemSpec, HybridState, ScalarField, SimParams, estimate_dirichlet
from switchkac.model import ModelSpec, constant, constant_generator

bm = ModelSpec(1, 1, constant([0.0]), constant([1.0], kind="diffusion"),
               constant_generator([[0.0]]), 0.0, name="bm")
# the source enters with a minus sign, so -1 gives E[tau]
prob = DirichletProblemSpec(Box([-1.0], [1.0]), None, ScalarField.constant(-1.0), ScalarField.constant(0.0))

for k, x in enumerate([-0.5, 0.0, 0.7]):
    e = estimate_dirichlet(bm, prob, HybridState([x], 0), SimParams(1.0, 1e-3, seed=2, stream_id=k), 20_000)
    print(f"x={x:+.1f}  E[tau] = {e.mean:.4f} +- {e.std_error:.4f}   exact {1 - x * x:.4f}")
