"""
The customer walk and the sign of v0
====================================

A single customer in the gap network performs a nearest-neighbour walk on
the queues.  It is absorbed at 0 when it leaves past the first particle.
The walk is transient exactly when ``v0 < 0``, and then ``|v0| = a_1 p0``
with ``p0`` the escape probability.
"""

from excloud import traffic, walk
from excloud.rates import GOLDEN, rate_at

# %%
# Classification against the closed-form speed

for name, env in GOLDEN.items():
    wc = walk.classify(env)
    v0 = traffic.compute_v0(env).v0
    print(f"{name:22s} {wc.kind:19s} p0 = {wc.p0:.4f}   a1 p0 = {rate_at(env, 1)[0] * wc.p0:.4f}"
          f"   |v0| = {abs(v0):.4f}")

# %%
# Monte Carlo
# -----------
# For the one-sheep-many-dogs environment half the walkers never return.

env = GOLDEN["one_sheep_many_dogs"]
print("escaped fraction:", walk.escape_fraction(env, 20_000, 2_000, seed=1))
print("one path:", walk.simulate_walk(GOLDEN["homogeneous_1_2"], 40, seed=3))
