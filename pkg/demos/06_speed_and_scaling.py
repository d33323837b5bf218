"""
Speed and the square-root law
=============================

A strong law gives ``X1(t) / t -> v0``.  For the dog and sheep ``v0 = 0``
but ``-X1(t)`` still grows, at the rate ``t^(1/2)``.
"""

import numpy as np

from excloud import engine, stats
from excloud.experiments import dyadic_times
from excloud.rates import GOLDEN

# %%
# Speeds from batch means

for name in ("one_sheep_many_dogs", "homogeneous_1_2", "dog_sheep"):
    cfg = engine.SimulationConfig(GOLDEN[name], horizon=2_000.0, seed=2, snapshot_count=50,
                                  window=1)
    s = engine.run(cfg)
    est = stats.speed(s.snapshot_t, s.snapshot_x1)
    print(f"{name:22s} speed {est.value:+.3f} +- {est.se:.3f}")

# %%
# Log-log slope of the dog

grid = dyadic_times(100.0, 25_600.0)
slopes = []
for i in range(5):
    cfg = engine.SimulationConfig(GOLDEN["dog_sheep"], horizon=grid[-1], seed=i,
                                  snapshot_times=grid, window=1)
    s = engine.run(cfg)
    slopes.append(stats.scaling_exponent(s.snapshot_t, s.snapshot_x1).slope)
print("slopes", np.round(slopes, 3), " median", round(float(np.median(slopes)), 3))
