"""Graphical construction and the couplings built on it.

A :class:`PoissonField` holds, for every queue ``k <= M``, a stream of left
arrows (rate ``b_k``) and right arrows (rate ``a_{k+1}``), plus the right
arrows of queue 0 (rate ``a_1``) which inject customers into queue 1.  Any
number of systems can be driven by the same field: an arrow at an empty
queue does nothing, so every trajectory is a deterministic function of the
field and the initial state.

Truncations at ``N``
--------------------
``lower``   right arrows at ``N`` remove the customer; queues beyond ``N``
            do not exist
``upper``   as ``lower``, and every left arrow of queue ``N + 1`` injects a
            customer into ``N`` (rate ``b_{N+1}``, unconditionally)

Under one field, ``lower <= semi_infinite <= upper`` holds queue by queue on
``1..N``, and so does the ordering of the first particle's position.  The
kernels check this at every arrow rather than trusting it.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from numba import njit

from .engine import GapState
from .rates import RateEnvironment, require_positive
from .rng import make_rng

__all__ = [
    "PoissonField",
    "Trajectory",
    "CoupledTriple",
    "TwoClassResult",
    "CapReached",
    "build_field",
    "apply_field",
    "sandwich_run",
    "two_class_run",
]

SEMI, LOWER, UPPER = 0, 1, 2
_MODES = {"semi_infinite": SEMI, "lower": LOWER, "upper": UPPER}
LEFT, RIGHT = 0, 1
_NOOP = -1
_ABORT = -2


class CapReached(RuntimeError):
    """A customer would have left the field's queues ``1..M``."""


@dataclass(frozen=True)
class PoissonField:
    """Merged, time-sorted arrows on ``[0, window]``.

    ``queue[i]`` and ``kind[i]`` (0 left, 1 right) describe arrow ``i``;
    queue 0 carries only right arrows.
    """

    window: float
    cap: int
    times: np.ndarray
    queue: np.ndarray
    kind: np.ndarray
    rates_left: np.ndarray = dc_field(repr=False)
    rates_right: np.ndarray = dc_field(repr=False)

    @property
    def n_arrows(self) -> int:
        return len(self.times)

    def counts(self, kind: int) -> np.ndarray:
        """Arrows of ``kind`` per queue ``0..M``."""
        return np.bincount(self.queue[self.kind == kind], minlength=self.cap + 1)


def build_field(env: RateEnvironment, window: float, cap: int, seed) -> PoissonField:
    """Independent Poisson streams for queues ``0..cap``.

    Each stream gets a Poisson count and sorted uniform times.  An exact
    timestamp tie between streams (a probability-zero event) triggers a full
    redraw from the continuing stream.
    """
    require_positive(env)
    if window < 0:
        raise ValueError("window must be non-negative")
    if cap < 1:
        raise ValueError("cap must be >= 1")
    rng = make_rng(seed)
    a, b = env.arrays(cap + 1)
    left = np.zeros(cap + 1)
    right = np.zeros(cap + 1)
    left[1:] = b[1 : cap + 1]
    right[0] = a[1]
    right[1:] = a[2 : cap + 2]
    rates = np.concatenate((left, right))
    if not np.all(np.isfinite(rates)):
        raise ValueError("rates overflow on queues 1..cap")
    q_all = np.concatenate((np.arange(cap + 1), np.arange(cap + 1)))
    k_all = np.concatenate((np.full(cap + 1, LEFT), np.full(cap + 1, RIGHT)))
    while True:
        counts = rng.poisson(rates * window)
        n = int(counts.sum())
        times = rng.random(n) * window
        queue = np.repeat(q_all, counts)
        kind = np.repeat(k_all, counts)
        order = np.argsort(times, kind="stable")
        times, queue, kind = times[order], queue[order], kind[order]
        if n < 2 or np.all(np.diff(times) > 0):
            break
    return PoissonField(
        float(window), int(cap), times, queue.astype(np.int64), kind.astype(np.int64), left, right
    )


# -- arrow rule -----------------------------------------------------------


@njit(cache=True, inline="always")
def _arrow(eta, q, kind, mode, N, M):
    """Effective move ``(src, dst)`` of one arrow; 0 means outside."""
    if q == 0:
        return 0, 1
    if kind == LEFT:
        if mode == UPPER and q == N + 1:
            return 0, N
        if mode != SEMI and q > N:
            return _NOOP, _NOOP
        if eta[q] == 0:
            return _NOOP, _NOOP
        return q, q - 1
    if mode != SEMI and q > N:
        return _NOOP, _NOOP
    if eta[q] == 0:
        return _NOOP, _NOOP
    if mode != SEMI and q == N:
        return N, 0
    if q == M:
        return _ABORT, _ABORT
    return q, q + 1


@njit(cache=True, inline="always")
def _move(eta, src, dst):
    if src > 0:
        eta[src] -= 1
    if dst > 0:
        eta[dst] += 1


@njit(cache=True, inline="always")
def _dx1(q, kind, src):
    # injections at queue 1 push the first particle left, departures right
    if q == 0:
        return -1
    if kind == LEFT and q == 1 and src == 1:
        return 1
    return 0


@njit(cache=True)
def _apply(eta, x1, queue, kind, mode, N, M, src_out, dst_out, x1_out, tot_out):
    total = 0
    for k in range(eta.shape[0]):
        total += eta[k]
    for i in range(queue.shape[0]):
        q = queue[i]
        s, d = _arrow(eta, q, kind[i], mode, N, M)
        if s == _ABORT:
            return i
        if s != _NOOP:
            x1 += _dx1(q, kind[i], s)
            _move(eta, s, d)
            if s == 0:
                total += 1
            if d == 0:
                total -= 1
        src_out[i] = s
        dst_out[i] = d
        x1_out[i] = x1
        tot_out[i] = total
    return -1


@njit(cache=True)
def _sandwich(es, el, eu, x1s, x1l, x1u, queue, kind, N, M, xs_out, xl_out, xu_out,
              viol, max_viol):
    nv = 0
    for i in range(queue.shape[0]):
        q = queue[i]
        k = kind[i]
        s0, d0 = _arrow(es, q, k, SEMI, N, M)
        if s0 == _ABORT:
            return i, nv
        s1, d1 = _arrow(el, q, k, LOWER, N, M)
        s2, d2 = _arrow(eu, q, k, UPPER, N, M)
        if s0 != _NOOP:
            x1s += _dx1(q, k, s0)
            _move(es, s0, d0)
        if s1 != _NOOP:
            x1l += _dx1(q, k, s1)
            _move(el, s1, d1)
        if s2 != _NOOP:
            x1u += _dx1(q, k, s2)
            _move(eu, s2, d2)
        xs_out[i] = x1s
        xl_out[i] = x1l
        xu_out[i] = x1u
        # only queues touched by this arrow can change, so checking them
        # keeps the full componentwise ordering verified
        for j in (q - 1, q, q + 1):
            if 1 <= j <= N:
                if el[j] > es[j] or es[j] > eu[j]:
                    if nv < max_viol:
                        viol[nv, 0] = i
                        viol[nv, 1] = j
                    nv += 1
        if x1l > x1s or x1s > x1u:
            if nv < max_viol:
                viol[nv, 0] = i
                viol[nv, 1] = 0
            nv += 1
    return -1, nv


@njit(cache=True)
def _two_class(first, second, el, eu, queue, kind, M, viol, max_viol):
    """Priority dynamics against independent single systems.

    ``el``/``eu`` evolve by the plain rule from the lower/upper initial
    states.  Checked at every arrow on touched queues: ``el <= eu``,
    ``first == el`` and ``first + second == eu``.
    """
    nv = 0
    tot = first + second
    for i in range(queue.shape[0]):
        q = queue[i]
        k = kind[i]
        s, d = _arrow(tot, q, k, SEMI, 0, M)
        if s == _ABORT:
            return i, nv
        if s != _NOOP:
            if s == 0:
                first[d] += 1
            elif first[s] > 0:
                first[s] -= 1
                if d > 0:
                    first[d] += 1
            else:
                second[s] -= 1
                if d > 0:
                    second[d] += 1
            _move(tot, s, d)
        sl, dl = _arrow(el, q, k, SEMI, 0, M)
        if sl != _NOOP:
            _move(el, sl, dl)
        su, du = _arrow(eu, q, k, SEMI, 0, M)
        if su != _NOOP:
            _move(eu, su, du)
        for j in (q - 1, q, q + 1):
            if 1 <= j <= M:
                if el[j] > eu[j] or first[j] != el[j] or tot[j] != eu[j]:
                    if nv < max_viol:
                        viol[nv, 0] = i
                        viol[nv, 1] = j
                    nv += 1
    return -1, nv


# -- public wrappers -------------------------------------------------------


def _dense(state: GapState, M: int) -> np.ndarray:
    if state.frontier > M:
        raise CapReached(f"initial state occupies queue {state.frontier} beyond cap {M}")
    eta = np.zeros(M + 2, np.int64)
    n = min(len(state.eta), M + 2)
    eta[:n] = state.eta[:n]
    return eta


@dataclass
class Trajectory:
    """Per-arrow effective moves of one system.

    ``src[i], dst[i]`` is the move made by arrow ``i`` (``-1`` for a no-op,
    ``0`` for outside); ``x1[i]`` and ``total[i]`` are the values just after it.
    """

    times: np.ndarray
    src: np.ndarray
    dst: np.ndarray
    x1: np.ndarray
    total: np.ndarray
    final: GapState
    initial: GapState

    def state_after(self, i: int) -> GapState:
        """Replay the moves up to and including arrow ``i``."""
        eta = np.zeros(max(len(self.final.eta), len(self.initial.eta)), np.int64)
        eta[: len(self.initial.eta)] = self.initial.eta
        s, d = self.src[: i + 1], self.dst[: i + 1]
        eff = s != _NOOP
        np.subtract.at(eta, s[eff & (s > 0)], 1)
        np.add.at(eta, d[eff & (d > 0)], 1)
        return GapState(int(self.x1[i]), eta, float(self.times[i]))


def apply_field(
    initial: GapState, fld: PoissonField, boundary: str = "semi_infinite", N: int | None = None
) -> Trajectory:
    """Drive one system with every arrow of ``fld`` in time order."""
    mode = _MODES[boundary]
    M = fld.cap
    if mode != SEMI:
        if N is None or N < 1:
            raise ValueError("truncated boundaries need N >= 1")
        if N + (mode == UPPER) > M:
            raise ValueError(f"N={N} needs a field of cap >= {N + (mode == UPPER)}")
        if initial.frontier > N:
            raise ValueError(f"initial state occupies queue {initial.frontier} beyond N={N}")
    eta = _dense(initial, M)
    n = fld.n_arrows
    src = np.empty(n, np.int64)
    dst = np.empty(n, np.int64)
    x1 = np.empty(n, np.int64)
    tot = np.empty(n, np.int64)
    bad = _apply(eta, initial.x1, fld.queue, fld.kind, mode, N or 0, M, src, dst, x1, tot)
    if bad >= 0:
        raise CapReached(f"arrow {bad} at t={fld.times[bad]:.6g} would move a customer past queue {M}")
    final = GapState(int(x1[-1]) if n else initial.x1, eta, fld.window)
    return Trajectory(fld.times, src, dst, x1, tot, final, initial)


@dataclass
class CoupledTriple:
    N: int
    n_arrows: int
    x1_semi: np.ndarray
    x1_lower: np.ndarray
    x1_upper: np.ndarray
    final_semi: np.ndarray
    final_lower: np.ndarray
    final_upper: np.ndarray
    n_violations: int
    violations: list = dc_field(default_factory=list)

    @property
    def identical(self) -> bool:
        """The truncation was never felt.

        The first particle follows the same path in all three systems, and
        the lower system equals the semi-infinite one, which never placed a
        customer beyond ``N``.  The upper system keeps its extra customers
        injected at ``N``; they only matter once they reach queue 1.
        """
        n = self.N
        return (
            np.array_equal(self.x1_semi, self.x1_lower)
            and np.array_equal(self.x1_semi, self.x1_upper)
            and np.array_equal(self.final_semi[: n + 1], self.final_lower[: n + 1])
            and not self.final_semi[n + 1 :].any()
        )

    def report(self) -> dict:
        return {
            "N": self.N,
            "n_arrows": self.n_arrows,
            "violations": self.n_violations,
            "first_violations": [{"arrow": int(i), "queue": int(k)} for i, k in self.violations],
            "identical": bool(self.identical),
            "x1_final": {
                "lower": int(self.x1_lower[-1]) if self.n_arrows else None,
                "semi_infinite": int(self.x1_semi[-1]) if self.n_arrows else None,
                "upper": int(self.x1_upper[-1]) if self.n_arrows else None,
            },
        }


def sandwich_run(
    env: RateEnvironment,
    initial: GapState,
    N: int,
    window: float,
    seed,
    cap: int = 256,
    fld: PoissonField | None = None,
    max_report: int = 20,
) -> CoupledTriple:
    """The system and its lower/upper truncations at ``N`` under one field.

    ``violations`` lists ``(arrow, queue)`` pairs where an ordering failed;
    queue 0 flags the first-particle ordering.  The truncations start from
    ``initial`` restricted to queues ``1..N``.
    """
    if fld is None:
        fld = build_field(env, window, cap, seed)
    M = fld.cap
    if N + 1 > M:
        raise ValueError(f"N={N} needs a field of cap >= {N + 1}")
    es = _dense(initial, M)
    el = es.copy()
    el[N + 1 :] = 0
    eu = el.copy()
    n = fld.n_arrows
    xs, xl, xu = (np.empty(n, np.int64) for _ in range(3))
    viol = np.zeros((max_report, 2), np.int64)
    x0 = initial.x1
    bad, nv = _sandwich(es, el, eu, x0, x0, x0, fld.queue, fld.kind, N, M, xs, xl, xu, viol,
                        max_report)
    if bad >= 0:
        raise CapReached(f"arrow {bad} at t={fld.times[bad]:.6g} would move a customer past queue {M}")
    return CoupledTriple(
        N, n, xs, xl, xu, es, el, eu, int(nv),
        [tuple(r) for r in viol[: min(nv, max_report)].tolist()],
    )


@dataclass
class TwoClassResult:
    n_arrows: int
    first: np.ndarray
    second: np.ndarray
    lower_final: np.ndarray
    upper_final: np.ndarray
    n_violations: int
    violations: list

    def report(self) -> dict:
        return {
            "n_arrows": self.n_arrows,
            "violations": self.n_violations,
            "first_violations": [{"arrow": int(i), "queue": int(k)} for i, k in self.violations],
        }


def two_class_run(
    env: RateEnvironment,
    lower: GapState,
    upper: GapState,
    window: float,
    seed,
    cap: int = 256,
    fld: PoissonField | None = None,
    max_report: int = 20,
) -> TwoClassResult:
    """First-class customers realize ``lower``; both classes together ``upper``.

    The excess ``upper - lower`` starts as second-class customers, who are
    served only when no first-class customer waits in their queue.  Both
    class projections are compared with independent single-system runs at
    every arrow.
    """
    if fld is None:
        fld = build_field(env, window, cap, seed)
    M = fld.cap
    el = _dense(lower, M)
    eu = _dense(upper, M)
    if np.any(el > eu):
        raise ValueError("lower must be dominated by upper componentwise")
    first = el.copy()
    second = eu - el
    viol = np.zeros((max_report, 2), np.int64)
    bad, nv = _two_class(first, second, el, eu, fld.queue, fld.kind, M, viol, max_report)
    if bad >= 0:
        raise CapReached(f"arrow {bad} would move a customer past queue {M}")
    return TwoClassResult(
        fld.n_arrows, first, second, el, eu, int(nv),
        [tuple(r) for r in viol[: min(nv, max_report)].tolist()],
    )
