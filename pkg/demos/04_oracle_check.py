"""
Checking the engine against an exact solver
===========================================

For a handful of queues with a cap on the number of customers the gap
process is a finite Markov chain.  The oracle builds its generator and
computes stationary and transient laws exactly, which the simulator has to
reproduce in distribution.
"""

import numpy as np

from excloud import engine, oracle
from excloud.rates import GOLDEN, dog_and_n_sheep

# %%
# Transient law at t = 0.5 from the empty state

env = GOLDEN["dog_sheep"]
ch = oracle.TruncatedChain.from_env(env, 3, 8, "lower")
ref = oracle.transient_distribution(ch, [0, 0, 0], 0.5)
print(f"{ch.n_states} states, truncation error bound {ref.error_bound:.1e}")

out = engine.final_gaps(env, 0.5, 200_000, 7, boundary="lower", N=3, customer_cap=8, window=3)
rows, counts = np.unique(out, axis=0, return_counts=True)
emp = np.zeros(ch.n_states)
emp[[ch.index(r) for r in rows]] = counts / len(out)
print("TV(engine, oracle) =", 0.5 * np.abs(emp - ref.p).sum())

# %%
# Stationary law of a finite system
# ---------------------------------
# A dog and two sheep: the stationary gaps are independent geometric with
# means fixed by ``rho = (2/3, 5/6)``.

ch = oracle.TruncatedChain.from_env(dog_and_n_sheep(2, 0.5), 2, 100, "finite")
st = oracle.stationary(ch)
pf = oracle.product_form(ch, truncate=False)
print("residual", st.residual, " TV to product form", 0.5 * np.abs(st.p - pf).sum())
for k in (1, 2):
    m = oracle.marginal(ch, st.p, k)
    print(f"queue {k}: P(0) = {m[0]:.4f}")
