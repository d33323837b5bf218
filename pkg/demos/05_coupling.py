"""
Graphical construction and couplings
====================================

Driving several systems with one field of Poisson arrows gives exact
pathwise comparisons.  Truncating at ``N`` from below (customers leave at
``N``) and from above (customers are also fed in at ``N``) squeezes the
semi-infinite process between two finite ones.
"""

import numpy as np

from excloud import coupling
from excloud.engine import GapState
from excloud.rates import GOLDEN

env = GOLDEN["dog_sheep"]

# %%
# The sandwich

r = coupling.sandwich_run(env, GapState(), N=4, window=200.0, seed=1, cap=128)
print(r.report())
i = np.linspace(0, r.n_arrows - 1, 6).astype(int)
print("X1 lower / semi / upper at a few arrows:")
print(np.column_stack([r.x1_lower[i], r.x1_semi[i], r.x1_upper[i]]))

# %%
# Second-class customers
# ----------------------
# The excess of a larger initial state is carried by second-class
# customers; forgetting the classes recovers the larger system.

res = coupling.two_class_run(env, GapState(), GapState.from_gaps({1: 3, 2: 1}), 100.0, 2, cap=128)
print("arrows", res.n_arrows, "violations", res.n_violations)
print("second-class customers left:", int(res.second.sum()))
