"""Event-driven simulation of the gap process.

The exclusion process is simulated through its queueing dual: ``eta_k`` is
the number of holes between particles ``k`` and ``k + 1``, i.e. the length of
queue ``k`` in a Jackson network.  An occupied queue serves at rate
``mu_k = b_k + a_{k+1}`` and routes the customer left (particle ``k`` jumps
right) with probability ``b_k / mu_k`` or right (particle ``k + 1`` jumps
left) otherwise.  Customers enter queue 1 at rate ``a_1`` (the first particle
jumps left) and leave from queue 1 to the left (it jumps right).  The first
particle's position therefore moves by exactly minus the change in the total
number of customers.

Sampling uses one exponential clock for the aggregate rate and a Fenwick
tree over the occupied queues, so an event costs ``O(log frontier)``.

Boundaries
----------
``semi_infinite``
    the process itself
``lower``
    only queues ``1..N``; a customer routed right from ``N`` is removed
``upper``
    as ``lower``, plus arrivals into queue ``N`` at rate ``b_{N+1}``.  This is
    exactly the finite system of ``N + 1`` particles.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import _kernels as K
from .rates import (
    HypothesisError,
    RateEnvironment,
    Verdict,
    check_hypotheses,
    require_positive,
)
from .rng import make_rng

__all__ = [
    "GapState",
    "Heaviside",
    "ExplicitGaps",
    "TruncatedGeometric",
    "SimulationConfig",
    "EventRecord",
    "RunSummary",
    "SimulationAbort",
    "Simulator",
    "init",
    "step",
    "run",
    "final_gaps",
    "particle_positions",
    "initial_from_dict",
    "BOUNDARIES",
    "CSV_COLUMNS_PREFIX",
]

BOUNDARIES = {"semi_infinite": K.SEMI, "lower": K.LOWER, "upper": K.UPPER}
CSV_COLUMNS_PREFIX = ("t", "x1", "total_customers")
_MIN_CAP = 64


class SimulationAbort(RuntimeError):
    """The frontier passed the configured hard cap."""


# -- state --------------------------------------------------------------


@dataclass
class GapState:
    """Occupancies of the queues plus the position of the first particle.

    ``eta`` is dense (``eta[k]`` for ``k >= 1``, slot 0 unused); :attr:`gaps`
    gives the sparse view with zero entries dropped.
    """

    x1: int = 0
    eta: np.ndarray = field(default_factory=lambda: np.zeros(2, np.int64))
    clock: float = 0.0
    entered: int = 0
    exited: int = 0

    @classmethod
    def from_gaps(cls, gaps: Mapping[int, int], x1: int = 0) -> "GapState":
        n = max(gaps, default=0)
        eta = np.zeros(n + 2, np.int64)
        for k, c in gaps.items():
            if int(k) < 1:
                raise ValueError(f"queue indices start at 1, got {k}")
            if int(c) < 0:
                raise ValueError(f"negative occupancy at queue {k}")
            eta[int(k)] = int(c)
        return cls(int(x1), eta)

    @property
    def gaps(self) -> dict[int, int]:
        return {int(k): int(self.eta[k]) for k in np.flatnonzero(self.eta) if k >= 1}

    @property
    def total_customers(self) -> int:
        return int(self.eta[1:].sum())

    @property
    def frontier(self) -> int:
        nz = np.flatnonzero(self.eta[1:])
        return int(nz[-1]) + 1 if nz.size else 0

    def window(self, w: int) -> np.ndarray:
        out = np.zeros(w, np.int64)
        m = min(w, len(self.eta) - 1)
        out[:m] = self.eta[1 : m + 1]
        return out

    def to_dict(self) -> dict:
        return {
            "x1": self.x1,
            "gaps": {str(k): v for k, v in self.gaps.items()},
            "total_customers": self.total_customers,
            "frontier": self.frontier,
            "entered": self.entered,
            "exited": self.exited,
            "clock": self.clock,
        }


def particle_positions(state: GapState, n: int) -> np.ndarray:
    """Positions of particles ``1..n``: ``X_k = x1 + (k - 1) + sum_{j<k} eta_j``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    g = state.window(n - 1)
    return state.x1 + np.arange(n) + np.concatenate(([0], np.cumsum(g)))


# -- initial conditions -------------------------------------------------


@dataclass(frozen=True)
class Heaviside:
    """Close-packed start: particles on ``0, 1, 2, ...``."""

    def to_dict(self) -> dict:
        return {"kind": "heaviside"}


@dataclass(frozen=True)
class ExplicitGaps:
    gaps: tuple[tuple[int, int], ...]
    x1: int = 0

    def __init__(self, gaps: Mapping[int, int] | Iterable[tuple[int, int]], x1: int = 0):
        items = gaps.items() if isinstance(gaps, Mapping) else gaps
        object.__setattr__(self, "gaps", tuple(sorted((int(k), int(c)) for k, c in items)))
        object.__setattr__(self, "x1", int(x1))

    def to_dict(self) -> dict:
        return {"kind": "gaps", "gaps": {str(k): c for k, c in self.gaps}, "x1": self.x1}


@dataclass(frozen=True)
class TruncatedGeometric:
    """Independent ``eta_k ~ Geo(1 - rho_k)`` on ``{0, 1, ...}`` for ``k <= n_trunc``."""

    rho: tuple[float, ...]
    n_trunc: int

    def __init__(self, rho: Sequence[float] | float, n_trunc: int):
        n_trunc = int(n_trunc)
        r = (float(rho),) * n_trunc if np.isscalar(rho) else tuple(float(x) for x in rho)
        if len(r) < n_trunc:
            raise ValueError("rho profile shorter than n_trunc")
        if any(not 0 <= x < 1 for x in r[:n_trunc]):
            raise ValueError("rho values must lie in [0, 1)")
        object.__setattr__(self, "rho", r[:n_trunc])
        object.__setattr__(self, "n_trunc", n_trunc)

    def to_dict(self) -> dict:
        return {"kind": "product_geometric", "rho": list(self.rho), "n_trunc": self.n_trunc}


Initial = Heaviside | ExplicitGaps | TruncatedGeometric


def initial_from_dict(d: Mapping | str) -> Initial:
    if d == "heaviside":
        return Heaviside()
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "heaviside":
        out = Heaviside()
    elif kind == "gaps":
        out = ExplicitGaps({int(k): v for k, v in d.pop("gaps", {}).items()}, d.pop("x1", 0))
    elif kind == "product_geometric":
        out = TruncatedGeometric(d.pop("rho"), d.pop("n_trunc"))
    else:
        raise ValueError(f"unknown initial kind {kind!r}")
    if d:
        raise ValueError(f"unknown initial keys: {sorted(d)}")
    return out


# -- configuration ------------------------------------------------------


@dataclass
class SimulationConfig:
    """Everything needed to reproduce a run.

    ``snapshot_times`` wins over ``snapshot_count``; with neither, 10 equally
    spaced snapshots are taken.  Histograms cover ``[burn_in, horizon]`` with
    ``burn_in`` defaulting to 10% of the horizon.
    """

    env: RateEnvironment
    initial: Initial = field(default_factory=Heaviside)
    horizon: float = 0.0
    seed: int = 0
    snapshot_times: Sequence[float] | None = None
    snapshot_count: int | None = None
    window: int = 32
    hist_max: int = 64
    burn_in: float | None = None
    boundary: str = "semi_infinite"
    N: int | None = None
    customer_cap: int | None = None
    frontier_cap: int | None = None
    record_x1: bool = False

    def __post_init__(self):
        if self.horizon < 0 or not math.isfinite(self.horizon):
            raise ValueError("horizon must be finite and non-negative")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"boundary must be one of {sorted(BOUNDARIES)}")
        if self.boundary != "semi_infinite":
            if self.N is None or self.N < 1:
                raise ValueError("truncated boundaries need N >= 1")
        if self.window < 1 or self.hist_max < 1:
            raise ValueError("window and hist_max must be >= 1")

    @property
    def burn(self) -> float:
        return 0.1 * self.horizon if self.burn_in is None else float(self.burn_in)

    def times(self) -> np.ndarray:
        if self.snapshot_times is not None:
            t = np.asarray(sorted(float(x) for x in self.snapshot_times))
            if t.size and (t[0] < 0 or t[-1] > self.horizon):
                raise ValueError("snapshot times must lie in [0, horizon]")
            return t
        n = 10 if self.snapshot_count is None else int(self.snapshot_count)
        return self.horizon * np.arange(n + 1) / max(n, 1)

    def to_dict(self) -> dict:
        return {
            "env": self.env.to_dict(),
            "initial": self.initial.to_dict(),
            "horizon": self.horizon,
            "seed": self.seed,
            "snapshot_times": None if self.snapshot_times is None else list(self.snapshot_times),
            "snapshot_count": self.snapshot_count,
            "window": self.window,
            "hist_max": self.hist_max,
            "burn_in": self.burn,
            "boundary": self.boundary,
            "N": self.N,
            "customer_cap": self.customer_cap,
            "frontier_cap": self.frontier_cap,
            "record_x1": self.record_x1,
        }


def _validate_env(env: RateEnvironment, boundary: str, N: int | None, frontier_cap) -> None:
    require_positive(env)
    if boundary == "semi_infinite":
        if env.max_index is not None:
            raise HypothesisError("an environment without tail needs a truncated boundary")
        if check_hypotheses(env).A1 is Verdict.FAILS and frontier_cap is None:
            raise HypothesisError(
                "sum of 1/a_k converges (A1 fails); set frontier_cap to simulate anyway"
            )
    else:
        need = N + 1
        if env.max_index is not None and env.max_index < need:
            raise HypothesisError(f"boundary at N={N} needs rates up to index {need}")


# -- the simulator --------------------------------------------------------


@dataclass(frozen=True)
class EventRecord:
    time_delta: float
    kind: str  # arrival | departure | serve_left | serve_right | boundary_in | boundary_out
    k: int | None = None


def _pow2_at_least(n: int) -> int:
    return 1 << max(int(n) - 1, 1).bit_length()


class Simulator:
    """Mutable simulation of one trajectory.

    Parameters mirror :class:`SimulationConfig`; ``rng`` is a numpy Generator
    whose stream is consumed by the compiled kernel.
    """

    def __init__(
        self,
        env: RateEnvironment,
        state: GapState,
        rng: np.random.Generator,
        *,
        boundary: str = "semi_infinite",
        N: int | None = None,
        customer_cap: int | None = None,
        frontier_cap: int | None = None,
        window: int = 32,
        hist_max: int = 64,
        record_x1: bool = False,
    ):
        _validate_env(env, boundary, N, frontier_cap)
        self.env = env
        self.rng = rng
        self.mode = BOUNDARIES[boundary]
        self.N = int(N) if N is not None else 0
        self.customer_cap = -1 if customer_cap is None else int(customer_cap)
        self.frontier_cap = -1 if frontier_cap is None else int(frontier_cap)
        front = state.frontier
        if self.mode != K.SEMI and front > self.N:
            raise ValueError(f"initial state occupies queue {front} beyond N={self.N}")
        if self.customer_cap >= 0 and state.total_customers > self.customer_cap:
            raise ValueError("initial state exceeds the customer cap")
        need = self.N if self.mode != K.SEMI else max(front + 1, _MIN_CAP)
        cap = _pow2_at_least(max(need, 2))
        self._alloc(cap)
        self.eta[: min(len(state.eta), cap + 2)] = state.eta[: cap + 2]
        K.fen_build(self.tree, self.eta, self.mu, cap)
        self.istate = np.zeros(K.N_ISTATE, np.int64)
        self.istate[K.I_X1] = state.x1
        self.istate[K.I_TOTAL] = state.total_customers
        self.istate[K.I_ENTERED] = state.entered
        self.istate[K.I_EXITED] = state.exited
        self.istate[K.I_FRONTIER] = front
        self.istate[K.I_NOCC] = int(np.count_nonzero(self.eta[1:]))
        self.fstate = np.zeros(K.N_FSTATE)
        self.fstate[K.F_T] = state.clock
        self.window = int(window)
        self.hist = np.zeros((self.window + 1, int(hist_max) + 1))
        self.last = np.zeros(self.window + 1)
        self.hist_on = False
        self.hist_start = 0.0
        self.record_x1 = bool(record_x1)
        self._x1_start = (float(state.clock), int(state.x1))
        self.logt = np.zeros(1024 if record_x1 else 1)
        self.logx = np.zeros(len(self.logt), np.int64)

    def _alloc(self, cap: int, old: np.ndarray | None = None) -> None:
        a, b = self.env.arrays(cap + 1) if self.env.max_index is None else self._finite_arrays(cap)
        self.a, self.b = a, b
        self.mu = np.zeros(cap + 2)
        self.mu[1 : cap + 1] = b[1 : cap + 1] + a[2 : cap + 2]
        if self.mode != K.SEMI:
            self.mu[self.N + 1 :] = 0.0
        self.eta = np.zeros(cap + 2, np.int64)
        if old is not None:
            self.eta[: len(old)] = old
        self.tree = np.zeros(cap + 1)

    def _finite_arrays(self, cap: int):
        n = self.env.max_index
        a0, b0 = self.env.arrays(n)
        a = np.zeros(cap + 2)
        b = np.zeros(cap + 2)
        m = min(n, cap + 1)
        a[: m + 1], b[: m + 1] = a0[: m + 1], b0[: m + 1]
        return a, b

    def _grow(self) -> None:
        cap = 2 * (len(self.tree) - 1)
        self._alloc(cap, self.eta)
        K.fen_build(self.tree, self.eta, self.mu, cap)
        if self.frontier_cap < 0 and not math.isfinite(self.mu[cap]):
            raise SimulationAbort("rates overflow; set a frontier cap")

    # -- driving --

    @property
    def time(self) -> float:
        return float(self.fstate[K.F_T])

    def advance(self, t_end: float, ev_limit: int = -1) -> int:
        while True:
            code = K.advance(
                self.eta, self.tree, self.a, self.b, self.mu, self.istate, self.fstate,
                float(t_end), self.mode, self.N, self.customer_cap, self.frontier_cap,
                self.hist, self.last, self.hist_on, self.logt, self.logx, self.record_x1,
                int(ev_limit), self.rng,
            )
            if code == K.GROW:
                self._grow()
            elif code == K.LOG_FULL:
                n = len(self.logt)
                self.logt = np.concatenate((self.logt, np.zeros(n)))
                self.logx = np.concatenate((self.logx, np.zeros(n, np.int64)))
            elif code == K.ABORT:
                raise SimulationAbort(
                    f"frontier {self.istate[K.I_FRONTIER]} passed the cap {self.frontier_cap}"
                    f" at t={self.time:.6g}"
                )
            else:
                return code

    def step(self) -> EventRecord:
        """Perform exactly one event and describe it."""
        before_eta = self.eta.copy()
        before = self.istate.copy()
        t0 = self.time
        code = self.advance(math.inf, int(self.istate[K.I_NEVENTS]) + 1)
        if code == K.DONE:
            raise RuntimeError("no transition is enabled")
        dt = self.time - t0
        if self.istate[K.I_ENTERED] > before[K.I_ENTERED]:
            return EventRecord(dt, "arrival", 1)
        if self.istate[K.I_EXITED] > before[K.I_EXITED]:
            return EventRecord(dt, "departure", 1)
        if self.istate[K.I_BOUNDARY_IN] > before[K.I_BOUNDARY_IN]:
            return EventRecord(dt, "boundary_in", self.N)
        n = min(len(before_eta), len(self.eta))
        diff = self.eta[:n] - before_eta[:n]
        src = int(np.flatnonzero(diff < 0)[0])
        if self.istate[K.I_BOUNDARY_OUT] > before[K.I_BOUNDARY_OUT]:
            return EventRecord(dt, "boundary_out", src)
        dst = int(np.flatnonzero(diff > 0)[0])
        return EventRecord(dt, "serve_left" if dst < src else "serve_right", src)

    def start_histograms(self) -> None:
        self.hist[:] = 0.0
        self.last[:] = self.time
        self.hist_start = self.time
        self.hist_on = True

    def histograms(self) -> np.ndarray:
        """Holding-time weights ``(window, hist_max + 1)`` for queues ``1..window``.

        The last column collects every value ``>= hist_max``.
        """
        h = self.hist.copy()
        if self.hist_on:
            top = h.shape[1] - 1
            w = self.window
            vals = np.minimum(self._eta_window(w), top)
            h[np.arange(1, w + 1), vals] += self.time - self.last[1:]
        return h[1:]

    def _eta_window(self, w: int) -> np.ndarray:
        out = np.zeros(w, np.int64)
        m = min(w, len(self.eta) - 1)
        out[:m] = self.eta[1 : m + 1]
        return out

    @property
    def state(self) -> GapState:
        f = int(self.istate[K.I_FRONTIER])
        return GapState(
            int(self.istate[K.I_X1]),
            self.eta[: f + 2].copy(),
            self.time,
            int(self.istate[K.I_ENTERED]),
            int(self.istate[K.I_EXITED]),
        )

    @property
    def x1(self) -> int:
        return int(self.istate[K.I_X1])

    @property
    def total(self) -> int:
        return int(self.istate[K.I_TOTAL])

    @property
    def n_events(self) -> int:
        return int(self.istate[K.I_NEVENTS])

    @property
    def frontier(self) -> int:
        return int(self.istate[K.I_FRONTIER])

    def x1_path(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact right-continuous ``(t, x1)`` jump log including the start."""
        if not self.record_x1:
            raise RuntimeError("x1 recording was not enabled")
        n = int(self.istate[K.I_LOGN])
        t0, x0 = self._x1_start
        return np.r_[t0, self.logt[:n]], np.r_[x0, self.logx[:n]].astype(np.int64)


# -- module-level operations ---------------------------------------------


def init(config: SimulationConfig, rng: np.random.Generator | None = None) -> GapState:
    """Initial state of ``config``; geometric sampling draws from ``rng``."""
    _validate_env(config.env, config.boundary, config.N, config.frontier_cap)
    ini = config.initial
    if isinstance(ini, Heaviside):
        return GapState()
    if isinstance(ini, ExplicitGaps):
        return GapState.from_gaps(dict(ini.gaps), ini.x1)
    rng = make_rng(config.seed) if rng is None else rng
    rho = np.asarray(ini.rho)
    # numpy's geometric counts trials from 1; shift to count failures from 0
    eta = np.zeros(ini.n_trunc + 2, np.int64)
    eta[1 : ini.n_trunc + 1] = rng.geometric(1.0 - rho) - 1
    return GapState(0, eta)


def step(sim: Simulator) -> EventRecord:
    return sim.step()


@dataclass
class RunSummary:
    config: dict
    initial: dict
    final: dict
    n_events: int
    snapshot_t: np.ndarray
    snapshot_x1: np.ndarray
    snapshot_total: np.ndarray
    snapshot_eta: np.ndarray  # (n_snapshots, window)
    histograms: np.ndarray  # (window, hist_max + 1)
    hist_window: tuple[float, float]
    max_frontier: int
    x1_log: tuple[np.ndarray, np.ndarray] | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "initial": self.initial,
            "final": self.final,
            "n_events": self.n_events,
            "max_frontier": self.max_frontier,
            "snapshots": {
                "t": self.snapshot_t.tolist(),
                "x1": self.snapshot_x1.tolist(),
                "total_customers": self.snapshot_total.tolist(),
            },
            "hist_window": list(self.hist_window),
            "histograms": [
                {"k": k + 1, "weights": _trim(row).tolist()} for k, row in enumerate(self.histograms)
            ],
        }

    def write_csv(self, path) -> None:
        """Snapshot time series ``t, x1, total_customers, eta_1..eta_w`` to a path or stream."""
        if hasattr(path, "write"):
            self._write_rows(path)
        else:
            with open(path, "w", newline="") as fh:
                self._write_rows(fh)

    def _write_rows(self, fh) -> None:
        w = self.snapshot_eta.shape[1]
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(list(CSV_COLUMNS_PREFIX) + [f"eta_{k}" for k in range(1, w + 1)])
        for i in range(len(self.snapshot_t)):
            wr.writerow(
                [repr(float(self.snapshot_t[i])), int(self.snapshot_x1[i]),
                 int(self.snapshot_total[i])] + [int(v) for v in self.snapshot_eta[i]]
            )


def _trim(row: np.ndarray) -> np.ndarray:
    nz = np.flatnonzero(row)
    return row[: nz[-1] + 1] if nz.size else row[:1]


def make_simulator(config: SimulationConfig, rng: np.random.Generator) -> Simulator:
    state = init(config, rng)
    return Simulator(
        config.env, state, rng,
        boundary=config.boundary, N=config.N, customer_cap=config.customer_cap,
        frontier_cap=config.frontier_cap, window=config.window,
        hist_max=config.hist_max, record_x1=config.record_x1,
    )


def run(config: SimulationConfig, rng: np.random.Generator | None = None) -> RunSummary:
    """Simulate to the horizon, taking snapshots and burn-in-windowed histograms."""
    rng = make_rng(config.seed) if rng is None else rng
    sim = make_simulator(config, rng)
    initial = sim.state.to_dict()
    times = config.times()
    burn = min(max(config.burn, 0.0), config.horizon)
    checkpoints = sorted(set(times.tolist()) | {burn, config.horizon})
    want = set(times.tolist())
    snaps_t, snaps_x, snaps_n, snaps_eta = [], [], [], []
    max_front = sim.frontier
    if burn <= 0.0:
        sim.start_histograms()
    for t in checkpoints:
        sim.advance(t)
        max_front = max(max_front, sim.frontier)
        if t == burn and not sim.hist_on:
            sim.start_histograms()
        if t in want:
            snaps_t.append(t)
            snaps_x.append(sim.x1)
            snaps_n.append(sim.total)
            snaps_eta.append(sim._eta_window(config.window))
    return RunSummary(
        config=config.to_dict(),
        initial=initial,
        final=sim.state.to_dict(),
        n_events=sim.n_events,
        snapshot_t=np.asarray(snaps_t, float),
        snapshot_x1=np.asarray(snaps_x, np.int64),
        snapshot_total=np.asarray(snaps_n, np.int64),
        snapshot_eta=np.asarray(snaps_eta, np.int64).reshape(len(snaps_t), config.window),
        histograms=sim.histograms(),
        hist_window=(burn, config.horizon),
        max_frontier=max_front,
        x1_log=sim.x1_path() if config.record_x1 else None,
    )


def final_gaps(
    env: RateEnvironment,
    t: float,
    n_rep: int,
    seed,
    *,
    initial: GapState | None = None,
    boundary: str = "semi_infinite",
    N: int | None = None,
    customer_cap: int | None = None,
    frontier_cap: int | None = None,
    window: int = 8,
) -> np.ndarray:
    """``eta_1..eta_window`` at time ``t`` for ``n_rep`` independent replicates.

    All replicates share one stream (``make_rng(seed)``), consumed in
    replicate order by a compiled loop.
    """
    state = GapState() if initial is None else initial
    # a throwaway simulator does the validation and builds the rate arrays
    sim = Simulator(env, state, make_rng(0), boundary=boundary, N=N,
                    customer_cap=customer_cap, frontier_cap=frontier_cap, window=1)
    out = np.zeros((n_rep, window), np.int64)
    while True:
        rng = make_rng(seed)
        bad = K.batch_final(
            sim.eta, sim.a, sim.b, sim.mu, float(t), sim.mode, sim.N, sim.customer_cap,
            sim.frontier_cap, out, rng,
        )
        if bad < 0:
            return out
        if sim.mode != K.SEMI or sim.frontier_cap >= 0 and len(sim.tree) - 1 > sim.frontier_cap:
            raise SimulationAbort(f"replicate {bad} passed the frontier cap")
        # restart the whole batch with room to spare so results stay reproducible
        sim._grow()
