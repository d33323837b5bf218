"""
Speeds and stationary profiles from the traffic equation
=========================================================

Every rate environment ``(a_k, b_k)`` comes with a linear recurrence whose
solutions ``rho = alpha + v * beta`` are candidate stationary gap profiles.
The admissible ones (all ``rho_k`` in ``(0, 1)``) are indexed by a speed
``v``; the smallest, ``v0``, is the speed of the cloud started from a finite
configuration.
"""

import numpy as np

from excloud import traffic
from excloud.rates import GOLDEN, dog_and_n_sheep

# %%
# The standard environments
# -------------------------
# ``admissible_set`` reports the interval of admissible speeds together with
# whether its right end is open; ``classify_vf`` says which of them give a
# summable profile (a stationary law for finitely many gaps).

for name, env in GOLDEN.items():
    v0 = traffic.compute_v0(env).v0
    V = traffic.admissible_set(env)
    vf = traffic.classify_vf(env)
    if V.empty:
        shape = "empty"
    elif V.right_end == "singleton":
        shape = f"{{{V.v0:g}}}"
    else:
        shape = f"[{V.v0:g}, {V.v1:g}{')' if V.right_end == 'open' else ']'}"
    print(f"{name:22s} v0 = {v0:+.3f}   V = {shape:12s} {vf.kind}")

# %%
# Profiles
# --------
# Homogeneous rates ``a = 1 < b = 2``: the minimal profile decays like
# ``2^-k`` while every other admissible speed has a profile with a positive
# limit ``v / (b - a)``.

env = GOLDEN["homogeneous_1_2"]
for v in (0.0, 0.5, 0.9):
    rho = traffic.solve_rho(env, v, 8).rho
    print(f"v = {v:.1f}:", np.round(rho, 4))

# %%
# Finite systems
# --------------
# One slow particle (``a_1 = 0.5``) followed by ``N`` symmetric ones: the
# finite system is stable, drifts right at ``(1 - a) / (N + 1)`` and has a
# linear density profile.

for N in (1, 2, 3, 10):
    f = traffic.finite_speed(dog_and_n_sheep(N, 0.5), N)
    print(f"N = {N:2d}  v_N = {f.vN:.4f}  rho = {np.round(f.rhoN[:4], 4)}")
