"""
Simulating the dog and sheep
============================

The engine simulates the gap process directly: ``eta_k`` is the number of
holes between particles ``k`` and ``k + 1``.  Only finitely many gaps are
ever non-zero when starting from a finite configuration, so the state stays
small.  The leftmost particle (the dog) drifts left like ``sqrt(t)`` even
though its speed is zero.
"""

import numpy as np

from excloud import engine, stats
from excloud.rates import GOLDEN

env = GOLDEN["dog_sheep"]

# %%
# One run from the close-packed start

cfg = engine.SimulationConfig(env, engine.Heaviside(), horizon=20_000.0, seed=1,
                              snapshot_times=[10.0 * 2**j for j in range(11)], window=5,
                              burn_in=2_000.0, hist_max=40)
s = engine.run(cfg)
for t, x in zip(s.snapshot_t, s.snapshot_x1):
    print(f"t = {t:8.0f}   X1 = {x:5d}   -X1/sqrt(t) = {-x / np.sqrt(t):.2f}")
print("events:", s.n_events, " largest occupied queue:", s.max_frontier)

# %%
# Gaps near the dog
# -----------------
# Time averages after burn-in are close to ``Geo(1/2)`` for each queue.

for k, row in enumerate(s.histograms, start=1):
    h = stats.MarginalHistogram.from_weights(k, row, overflow=True)
    print(f"queue {k}: P(0) = {h.pmf[0]:.3f}   TV to Geo(1/2) = {stats.tv_to_geometric(h, 0.5):.3f}")

# %%
# Particle positions can be rebuilt from the gaps.

state = engine.GapState.from_gaps({int(k): v for k, v in s.final["gaps"].items()}, s.final["x1"])
print("first particles:", engine.particle_positions(state, 8))
