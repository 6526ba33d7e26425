"""A two-regime jump diffusion, simulated path by path.

Volatility is 1 in regime 0 and 2 in regime 1, the chain flips at unit rate,
and small stable-like jumps arrive with intensity set by the truncation level.
The script prints a summary of one sample path.
"""

import numpy as np

from switchkac import HybridState, ModelSpec, SimParams, StableLike, simulate_path
from switchkac.model import constant, constant_generator, scaled_jump

spec = ModelSpec(
    1, 2,
    constant([0.0, 0.0]),
    constant([1.0, 2.0], kind="diffusion"),
    constant_generator([[-1.0, 1.0], [1.0, -1.0]]),
    1.0,
    scaled_jump([0.5, 1.0]),
    StableLike(0.5, inner=0.05, outer=1.0),
    name="jump",
)
path = simulate_path(spec, HybridState([0.0], 0), SimParams(5.0, 0.01, delta=0.05, seed=3))

print(f"grid points   {len(path.times)}")
print(f"switches      {len(path.switches)}")
print(f"jumps         {len(path.jumps)}")
print(f"final state   x={path.x_values[-1, 0]:.4f} regime={path.regimes[-1]}")
share = np.mean(path.regimes == 1)
print(f"time share in regime 1 (by grid point) {share:.2f}")
