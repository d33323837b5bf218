"""Stable traffic equation: alpha, beta, minimal speed, admissible speeds.

Solutions of the traffic recurrence with ``rho_0 = 1`` form the line
``rho = alpha + v * beta``.  Everything here is computed from two series:

* ``log_alpha[k] = sum_{j<=k} log(a_j / b_j)``
* ``S[k] = beta_k / alpha_k = sum_{l<k} 1 / (a_{l+1} alpha_l)``

``S`` is strictly increasing; its limit ``S_inf`` gives the minimal speed
``v0 = -1 / S_inf``.  Under a constant or factorial tail the limit and all
tail behaviour are known in closed form, which is what makes admissibility
decidable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rates import (
    ConstantTail,
    FactorialTail,
    NoTail,
    RateEnvironment,
    rate_at,
    require_positive,
)

__all__ = [
    "TrafficTables",
    "V0Result",
    "SpeedSet",
    "AdmissibleSolution",
    "VFClass",
    "FiniteSpeed",
    "compute_tables",
    "compute_v0",
    "s_infinity",
    "admissible_set",
    "solve_rho",
    "classify_vf",
    "finite_speed",
    "tail_limsups",
    "BOUNDARY_TOL",
]

BOUNDARY_TOL = 1e-12
V0_TOL = 1e-14
KMAX = 10**6
# factorial tails are scanned this deep; beyond it all sequences are monotone
_FACTORIAL_SCAN = 200


@dataclass(frozen=True)
class TrafficTables:
    """``log alpha_k`` and ``S_k = beta_k / alpha_k`` for ``k = 0..K``."""

    K: int
    log_alpha: np.ndarray
    S: np.ndarray
    log_S: np.ndarray = field(repr=False)

    @property
    def alpha(self) -> np.ndarray:
        return np.exp(self.log_alpha)

    @property
    def log_beta(self) -> np.ndarray:
        return self.log_alpha + self.log_S

    @property
    def beta(self) -> np.ndarray:
        return np.exp(self.log_beta)


def compute_tables(env: RateEnvironment, K: int) -> TrafficTables:
    """Tabulate ``alpha`` (log domain) and ``S`` up to depth ``K``."""
    require_positive(env)
    if K < 1:
        raise ValueError("K must be >= 1")
    if env.max_index is not None and K > env.max_index:
        raise IndexError(f"depth {K} exceeds the {env.max_index} defined rates")
    la, lb = env.log_arrays(K)
    if not np.all(np.isfinite(la[1:]) & np.isfinite(lb[1:])):
        raise ValueError("positivity violated inside the requested depth")
    log_alpha = np.concatenate(([0.0], np.cumsum(la[1:] - lb[1:])))
    log_inc = -la[1:] - log_alpha[:-1]
    with np.errstate(over="ignore"):
        S = np.concatenate(([0.0], np.cumsum(np.exp(log_inc))))
    if np.all(np.isfinite(S)):
        with np.errstate(divide="ignore"):
            log_S = np.log(S)
    else:
        log_S = np.concatenate(([-np.inf], np.logaddexp.accumulate(log_inc)))
        S = np.exp(log_S)
    return TrafficTables(K, log_alpha, S, log_S)


# -- tail machinery ----------------------------------------------------


def _is_exact(env: RateEnvironment) -> bool:
    return isinstance(env.tail, (ConstantTail, FactorialTail))


def _start(env: RateEnvironment) -> int:
    """First index from which the tail recursions are homogeneous."""
    return max(env.L, 1)


def _log_s_infinity(env: RateEnvironment, tab: TrafficTables) -> float:
    """Exact ``log S_inf`` for analytic tails (``inf`` when divergent)."""
    L = env.L
    tail = env.tail
    if isinstance(tail, ConstantTail):
        if tail.a <= tail.b:
            return math.inf
        log_rest = -tab.log_alpha[L] - math.log(tail.a - tail.b)
    elif isinstance(tail, FactorialTail):
        if tail.a <= 1:
            return math.inf
        log_rest = -tab.log_alpha[L] - math.lgamma(L + 2) - math.log(tail.a - 1)
    else:
        raise TypeError("no closed form for this tail")
    return float(np.logaddexp(tab.log_S[L], log_rest))


def s_infinity(env: RateEnvironment) -> float:
    """``lim S_k`` in closed form; raises for tails without one."""
    tab = compute_tables(env, _start(env))
    return math.exp(_log_s_infinity(env, tab))


def _log_tail_sums(env: RateEnvironment, tab: TrafficTables) -> np.ndarray:
    """``log(S_inf - S_k)`` for ``k = 0..K``, computed without cancellation.

    Requires ``K >= L``; beyond the prefix the remainder is closed-form and
    inside it the explicit increments are added back one by one.
    """
    K, L = tab.K, env.L
    assert K >= L
    tail = env.tail
    if isinstance(tail, ConstantTail):
        out = -tab.log_alpha - math.log(tail.a - tail.b)
    else:
        lg = np.array([math.lgamma(k + 2) for k in range(K + 1)])
        out = -tab.log_alpha - lg - math.log(tail.a - 1)
    if L > 0:
        la, _ = env.log_arrays(L)
        log_inc = -la[1 : L + 1] - tab.log_alpha[:L]
        for k in range(L - 1, -1, -1):
            out[k] = np.logaddexp(out[k + 1], log_inc[k])
    return out


def tail_limsups(env: RateEnvironment) -> tuple[float, float]:
    """``(limsup alpha_k, limsup beta_k)`` for analytic tails."""
    tail = env.tail
    tab = compute_tables(env, _start(env))
    aL = math.exp(tab.log_alpha[env.L])
    if isinstance(tail, ConstantTail):
        if tail.a < tail.b:
            return 0.0, 1.0 / (tail.b - tail.a)
        if tail.a == tail.b:
            return aL, math.inf
        return math.inf, math.inf
    if isinstance(tail, FactorialTail):
        return 0.0, 0.0
    raise TypeError("limsups are only available for analytic tails")


# -- minimal speed -----------------------------------------------------


@dataclass(frozen=True)
class V0Result:
    v0: float
    status: str  # "exact_tail" | "converged" | "capped"
    K: int
    bracket: tuple[float, float]


def compute_v0(env: RateEnvironment, tol: float = V0_TOL, Kmax: int = KMAX) -> V0Result:
    """Minimal admissible speed ``v0 = -1 / lim S_k``."""
    require_positive(env)
    if _is_exact(env):
        K = _start(env)
        tab = compute_tables(env, K)
        ls = _log_s_infinity(env, tab)
        v0 = 0.0 if ls == math.inf else -math.exp(-ls)
        return V0Result(v0, "exact_tail", K, (v0, v0))

    kcap = Kmax if env.max_index is None else min(Kmax, env.max_index)
    K = min(64, kcap)
    while True:
        tab = compute_tables(env, K)
        S = tab.S
        last = S[-1] - S[-2]
        if last <= tol * S[-1]:
            v0 = -1.0 / S[-1]
            return V0Result(v0, "converged", K, (v0, v0))
        if K >= kcap:
            break
        K = min(2 * K, kcap)
    lower = -1.0 / S[-1]
    # geometric extrapolation of the remaining increments when they shrink
    incs = np.diff(S[-3:])
    q = incs[1] / incs[0] if incs[0] > 0 else math.inf
    est = -1.0 / (S[-1] + incs[1] * q / (1 - q)) if q < 1 else 0.0
    return V0Result(est, "capped", K, (lower, est))


# -- admissible set ----------------------------------------------------


@dataclass(frozen=True)
class SpeedSet:
    """The set of admissible speeds.

    ``right_end`` is one of ``"open"``, ``"closed"``, ``"singleton"``,
    ``"empty"``, ``"unknown"`` (bounded-depth verdict) or
    ``"indeterminate"`` (some ``rho_k`` within ``BOUNDARY_TOL`` of 1).
    """

    v0: float
    v1: float
    right_end: str
    exactness: str
    K: int

    @property
    def empty(self) -> bool:
        return self.right_end == "empty"

    def __contains__(self, v: float) -> bool:
        if self.right_end in ("empty", "indeterminate"):
            return False
        if self.right_end == "singleton":
            return v == self.v0
        if v < self.v0:
            return False
        return v <= self.v1 if self.right_end == "closed" else v < self.v1

    def as_dict(self) -> dict:
        return {
            "left": None if self.empty else self.v0,
            "right": None if self.empty else (None if math.isinf(self.v1) else self.v1),
            "right_end": self.right_end,
            "right_open": {"open": True, "closed": False}.get(self.right_end),
            "exactness": self.exactness,
        }


def _rho_bad(rho: np.ndarray, lower: bool = True) -> str | None:
    """Classify a finite block of rho values against the open interval (0, 1).

    ``lower=False`` skips the positivity check for callers that decide it
    exactly (factorially small values underflow to zero).
    """
    if np.any(rho >= 1.0) or (lower and np.any(rho <= 0.0)):
        return "empty"
    if np.any(rho >= 1.0 - BOUNDARY_TOL):
        return "indeterminate"
    return None


def admissible_set(env: RateEnvironment, Kmax: int = 10**4) -> SpeedSet:
    """Admissible speeds: empty, ``{v0}``, ``[v0, v1)`` or ``[v0, v1]``."""
    require_positive(env)
    v0r = compute_v0(env)
    v0 = v0r.v0
    tail = env.tail

    if isinstance(tail, ConstantTail):
        K = _start(env)
        tab = compute_tables(env, K)
        sol = solve_rho(env, v0, K)
        rho = sol.rho
        r = tail.a / tail.b
        if r > 1:
            # rho is constant beyond the prefix, equal to the affine fixed point
            fixed = v0 / (tail.b - tail.a)
            bad = _rho_bad(np.append(rho[: env.L], fixed))
            return SpeedSet(v0, v0, bad or "singleton", "exact", K)
        bad = _rho_bad(rho)
        if bad:
            return SpeedSet(v0, v0, bad, "exact", K)
        if r == 1:
            return SpeedSet(v0, v0, "singleton", "exact", K)
        ratios = (1.0 - tab.alpha[1:]) / tab.beta[1:]
        limit = tail.b - tail.a
        head = float(ratios.min())
        if head <= limit:
            return SpeedSet(v0, head, "open", "exact", K)
        return SpeedSet(v0, limit, "closed", "exact", K)

    if isinstance(tail, FactorialTail):
        K = max(_start(env), _FACTORIAL_SCAN)
        tab = compute_tables(env, K)
        sol = solve_rho(env, v0, K)
        bad = _rho_bad(sol.rho, lower=False)
        if bad:
            return SpeedSet(v0, v0, bad, "exact", K)
        with np.errstate(over="ignore", divide="ignore"):
            ratios = (1.0 - tab.alpha[1:]) * np.exp(-tab.log_beta[1:])
        # ratios diverge along the factorial tail, so the infimum is a minimum
        return SpeedSet(v0, float(ratios.min()), "open", "exact", K)

    K = min(Kmax, env.max_index) if env.max_index is not None else Kmax
    tab = compute_tables(env, K)
    sol = solve_rho(env, v0, K)
    bad = _rho_bad(sol.rho)
    if bad:
        return SpeedSet(v0, v0, bad, f"bounded_K({K})", K)
    ratios = (1.0 - tab.alpha[1:]) / tab.beta[1:]
    v1 = float(ratios.min())
    end = "singleton" if v1 <= v0 else "unknown"
    return SpeedSet(v0, max(v1, v0), end, f"bounded_K({K})", K)


# -- solutions ---------------------------------------------------------


@dataclass(frozen=True)
class AdmissibleSolution:
    v: float
    rho: np.ndarray  # rho[k-1] = rho_k for k = 1..K
    admissible: bool | None  # None: a value sits within BOUNDARY_TOL of 1
    tail_limit: float | None
    summable: str  # "yes" | "no" | "undecidable"
    exactness: str

    @property
    def K(self) -> int:
        return len(self.rho)


def _rho_values(env: RateEnvironment, v: float, K: int) -> np.ndarray:
    """``rho_k`` for ``k = 0..K``; stable around the minimal speed."""
    tab = compute_tables(env, K)
    if _is_exact(env):
        ls = _log_s_infinity(env, tab)
        if ls < math.inf:
            v0 = -math.exp(-ls)
            log_t = _log_tail_sums(env, tab)
            minimal = np.exp(tab.log_alpha + log_t - ls)
            if v == v0:
                return minimal
            return minimal + (v - v0) * tab.beta
    return tab.alpha * (1.0 + v * tab.S) if np.all(np.isfinite(tab.S)) else (
        tab.alpha + v * tab.beta
    )


def solve_rho(env: RateEnvironment, v: float, K: int) -> AdmissibleSolution:
    """The traffic solution ``rho = alpha + v * beta`` with an admissibility verdict."""
    require_positive(env)
    tail = env.tail
    depth = K
    if isinstance(tail, ConstantTail):
        depth = max(K, _start(env))
    elif isinstance(tail, FactorialTail):
        depth = max(K, _start(env), _FACTORIAL_SCAN)
    full = _rho_values(env, v, depth)
    rho = full[1 : K + 1]
    head = full[1:]

    if isinstance(tail, ConstantTail):
        r = tail.a / tail.b
        v0 = compute_v0(env).v0
        L0 = _start(env)
        if r < 1:
            limit = v / (tail.b - tail.a)
            summable = "yes" if v == 0 else "no"
            bad = _rho_bad(head[:L0]) or ("empty" if limit > 1 or limit < 0 else None)
        elif r == 1:
            aL = math.exp(compute_tables(env, L0).log_alpha[env.L])
            limit = aL if v == 0 else math.copysign(math.inf, v)
            summable = "no"
            bad = _rho_bad(head[:L0]) or (None if v == 0 else "empty")
        else:
            fixed = v0 / (tail.b - tail.a)
            limit = fixed if v == v0 else math.copysign(math.inf, v - v0)
            summable = "no"
            bad = _rho_bad(np.append(head[: env.L], fixed)) or (None if v == v0 else "empty")
        if bad is None:
            bad = _rho_bad(rho)
        return AdmissibleSolution(v, rho, _verdict(bad), limit, summable, "exact")

    if isinstance(tail, FactorialTail):
        v0 = compute_v0(env).v0
        # positivity holds exactly iff v >= v0 since S_k increases to S_inf
        bad = _rho_bad(head, lower=False) if v >= v0 else "empty"
        return AdmissibleSolution(v, rho, _verdict(bad), 0.0, "yes", "exact")

    bad = _rho_bad(rho)
    return AdmissibleSolution(v, rho, _verdict(bad), None, "undecidable", f"bounded_K({K})")


def _verdict(bad: str | None) -> bool | None:
    if bad is None:
        return True
    return None if bad == "indeterminate" else False


# -- finitely supported solutions --------------------------------------


@dataclass(frozen=True)
class VFClass:
    kind: str  # VF_equals_V | VF_singleton_zero | VF_singleton_negative | VF_empty
    v: float | None
    exactness: str


def _series_finite(env: RateEnvironment, Kmax: int) -> tuple[bool, bool, str]:
    tail = env.tail
    if isinstance(tail, ConstantTail):
        fin = tail.a < tail.b
        return fin, False, "exact"
    if isinstance(tail, FactorialTail):
        return True, True, "exact"
    # bounded verdict: treat a series as finite if its last terms are negligible
    K = min(Kmax, env.max_index) if env.max_index is not None else Kmax
    tab = compute_tables(env, K)
    a, b = tab.alpha, tab.beta
    return (
        bool(a[-1] < 1e-12 * a.sum()),
        bool(b[-1] < 1e-12 * b.sum()),
        f"bounded_K({K})",
    )


def classify_vf(env: RateEnvironment, Kmax: int = 10**4) -> VFClass:
    """Which admissible speeds give summable (finitely supported) profiles."""
    V = admissible_set(env, Kmax)
    sa, sb, exact = _series_finite(env, Kmax)
    if V.right_end in ("empty", "indeterminate"):
        return VFClass("VF_empty", None, exact)
    if sa and sb:
        return VFClass("VF_equals_V", None, exact)
    if sa:
        return VFClass("VF_singleton_zero", 0.0, exact) if 0.0 in V else VFClass(
            "VF_empty", None, exact
        )
    if _is_exact(env):
        # constant tails satisfy the non-explosion condition, which rules out
        # a summable profile once alpha itself is not summable
        return VFClass("VF_empty", None, exact)
    sol = solve_rho(env, V.v0, V.K)
    if V.v0 < 0 and sol.rho[-1] < 1e-12 * sol.rho.sum():
        return VFClass("VF_singleton_negative", V.v0, exact)
    return VFClass("VF_empty", None, exact)


# -- finite systems ----------------------------------------------------


@dataclass(frozen=True)
class FiniteSpeed:
    N: int
    vN: float
    rhoN: np.ndarray
    vN0: float
    rhoN0: np.ndarray


def finite_speed(env: RateEnvironment, N: int) -> FiniteSpeed:
    """Speed and profile of the finite system of ``N + 1`` particles.

    ``vN0`` is the same quantity with ``b_{N+1}`` set to zero, the lower
    truncation used in the sandwich coupling.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    sub = env.truncated(N) if env.max_index is None or env.max_index > N else env
    tab = compute_tables(sub, N)
    a_next, b_next = rate_at(env, N + 1)
    if not a_next > 0:
        raise ValueError("a_{N+1} must be positive")
    # S_{N+1} needs only a_{N+1}; 1/beta_{N+1} = b_{N+1} / (a_{N+1} alpha_N S_{N+1})
    s_next = tab.S[N] + math.exp(-math.log(a_next) - tab.log_alpha[N])
    inv_beta_next = b_next * math.exp(-math.log(a_next) - tab.log_alpha[N]) / s_next
    vN = inv_beta_next - 1.0 / s_next
    vN0 = -1.0 / s_next
    alpha, beta = tab.alpha[1:], tab.beta[1:]
    return FiniteSpeed(N, vN, alpha + vN * beta, vN0, alpha + vN0 * beta)
