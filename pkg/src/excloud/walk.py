"""The customer random walk on Z+ and its escape probability.

A customer at queue ``i`` is routed to ``i - 1`` with probability
``b_i / (b_i + a_{i+1})`` and to ``i + 1`` otherwise; reaching 0 means
leaving the network.  The walk's escape probability from 1 is computed from
its own product series, independently of the traffic tables, so the two
routes to the minimal speed can be checked against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rates import ConstantTail, FactorialTail, RateEnvironment, rate_at, require_positive
from .rng import make_rng

__all__ = [
    "WalkClassification",
    "classify",
    "escape_probability",
    "transition_probabilities",
    "simulate_walk",
    "escape_fraction",
]


@dataclass(frozen=True)
class WalkClassification:
    kind: str  # transient | null_recurrent | positive_recurrent
    p0: float
    exactness: str  # exact_tail | capped
    p0_bracket: tuple[float, float]


def _tail_ratio(env: RateEnvironment) -> float | None:
    """Constant value of ``b_i / a_{i+1}`` beyond the prefix, if analytic."""
    tail = env.tail
    if isinstance(tail, ConstantTail):
        return tail.b / tail.a
    if isinstance(tail, FactorialTail):
        return 1.0 / tail.a
    return None


def _log_terms(env: RateEnvironment, n: int) -> np.ndarray:
    """``log prod_{i<=j} b_i / a_{i+1}`` for ``j = 0..n``."""
    la, lb = env.log_arrays(n + 1)
    return np.concatenate(([0.0], np.cumsum(lb[1 : n + 1] - la[2 : n + 2])))


def escape_probability(env: RateEnvironment, Kmax: int = 10**6, tol: float = 1e-15):
    """``p0 = (1 + b1/a2 + b1 b2/(a2 a3) + ...)^{-1}`` and how it was obtained.

    Returns ``(p0, exactness, (lo, hi))``.
    """
    require_positive(env)
    q = _tail_ratio(env)
    if q is not None:
        L = env.L
        lt = _log_terms(env, L)
        log_head = float(np.logaddexp.reduce(lt))
        if q >= 1:
            return 0.0, "exact_tail", (0.0, 0.0)
        # terms beyond index L form a geometric series of ratio q
        log_rest = lt[L] + math.log(q) - math.log1p(-q)
        p0 = math.exp(-np.logaddexp(log_head, log_rest))
        return p0, "exact_tail", (p0, p0)

    nmax = Kmax if env.max_index is None else min(Kmax, env.max_index - 1)
    n = min(64, nmax)
    while True:
        lt = _log_terms(env, n)
        total = float(np.logaddexp.reduce(lt))
        if lt[-1] - total < math.log(tol) or n >= nmax:
            break
        n = min(2 * n, nmax)
    hi = math.exp(-total)
    r = math.exp(lt[-1] - lt[-2])
    if r < 1:
        lo = math.exp(-np.logaddexp(total, lt[-1] + math.log(r) - math.log1p(-r)))
    else:
        lo = 0.0
    status = "converged" if lt[-1] - total < math.log(tol) else "capped"
    return (hi if status == "converged" else lo), status, (lo, hi)


def classify(env: RateEnvironment, Kmax: int = 10**6) -> WalkClassification:
    """Recurrence class of the walk plus its escape probability from 1."""
    p0, exact, bracket = escape_probability(env, Kmax)
    tail = env.tail
    if isinstance(tail, ConstantTail):
        r = tail.a / tail.b  # alpha_k grows by this factor in the tail
        kind = "positive_recurrent" if r < 1 else ("null_recurrent" if r == 1 else "transient")
        return WalkClassification(kind, p0, "exact_tail", bracket)
    if isinstance(tail, FactorialTail):
        # a_{k+1} alpha_k = a^{k+1} along the tail
        a = tail.a
        kind = "positive_recurrent" if a < 1 else ("null_recurrent" if a == 1 else "transient")
        return WalkClassification(kind, p0, "exact_tail", bracket)
    if p0 > 0 and exact == "converged":
        return WalkClassification("transient", p0, "capped", bracket)
    # bounded verdict on the positive-recurrence series sum a_{k+1} alpha_k
    n = min(Kmax, env.max_index - 1) if env.max_index is not None else min(Kmax, 10**4)
    la, lb = env.log_arrays(n + 1)
    log_alpha = np.cumsum(la[1 : n + 1] - lb[1 : n + 1])
    terms = np.exp(la[2 : n + 2] + log_alpha)
    kind = "positive_recurrent" if terms[-1] < 1e-12 * terms.sum() else "null_recurrent"
    return WalkClassification(kind, 0.0, "capped", bracket)


def transition_probabilities(env: RateEnvironment, n: int) -> tuple[np.ndarray, np.ndarray]:
    """``(left, right)`` step probabilities at sites ``1..n`` (index 0 unused)."""
    a, b = env.arrays(n + 1)
    mu = b[1 : n + 1] + a[2 : n + 2]
    left = np.concatenate(([0.0], b[1 : n + 1] / mu))
    return left, 1.0 - left


def simulate_walk(env: RateEnvironment, n_steps: int, start: int = 1, seed=0) -> np.ndarray:
    """One trajectory of the walk, stopped on absorption at 0."""
    require_positive(env)
    if start < 1:
        raise ValueError("start must be >= 1")
    rng = make_rng(seed)
    size = start + n_steps + 1
    left, _ = transition_probabilities(env, size)
    u = rng.random(n_steps)
    path = [start]
    pos = start
    for i in range(n_steps):
        pos = pos - 1 if u[i] < left[pos] else pos + 1
        path.append(pos)
        if pos == 0:
            break
    return np.asarray(path, dtype=np.int64)


def escape_fraction(
    env: RateEnvironment, n_walkers: int, horizon: int, start: int = 1, seed=0
) -> float:
    """Fraction of independent walkers not absorbed within ``horizon`` steps."""
    require_positive(env)
    rng = make_rng(seed)
    left, _ = transition_probabilities(env, start + horizon + 1)
    pos = np.full(n_walkers, start, dtype=np.int64)
    alive = np.ones(n_walkers, dtype=bool)
    for _ in range(horizon):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        step = rng.random(idx.size) < left[pos[idx]]
        pos[idx] += np.where(step, -1, 1)
        alive[idx[pos[idx] == 0]] = False
    return float(alive.mean())
