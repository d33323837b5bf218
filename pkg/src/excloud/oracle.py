"""Brute-force solvers for small truncations of the gap process.

A :class:`TruncatedChain` keeps queues ``1..N`` and at most ``C`` customers
in total.  Its generator uses the same rates and routing as the engine:

* arrivals into queue 1 at rate ``a_1``;
* an occupied queue ``k`` sends a customer left at rate ``b_k`` (leaving the
  system from ``k = 1``) and right at rate ``a_{k+1}``; from ``k = N`` the
  right move leaves the system;
* with ``boundary="finite"`` customers also arrive into queue ``N`` at rate
  ``b_{N+1}``, which is the finite system of ``N + 1`` particles.

Exogenous arrivals are blocked while ``C`` customers are present.  For this
Jackson network the stationary law of the blocked chain is the product form
restricted to ``{sum <= C}`` and renormalized, so the cap's effect is exactly
known and always reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.stats import poisson

from .rates import HypothesisError, RateEnvironment, rate_at
from .traffic import compute_tables, finite_speed

__all__ = [
    "TruncatedChain",
    "CapError",
    "StationaryResult",
    "TransientResult",
    "enumerate_states",
    "stationary",
    "transient_distribution",
    "product_form",
    "marginal",
    "MAX_STATES",
]

MAX_STATES = 10**5
DENSE_LIMIT = 10**4
DEFAULT_MAX_BOUNDARY = 1e-6


class CapError(ValueError):
    """Too much probability sits on the customer cap for the result to be trusted."""


def enumerate_states(N: int, C: int) -> np.ndarray:
    """All ``eta`` in ``Z_+^N`` with ``sum(eta) <= C``, in lexicographic order.

    Uses stars and bars: a composition of ``C`` into ``N + 1`` parts (the
    last part is the slack) corresponds to ``N`` bar positions among
    ``C + N`` slots.
    """
    rows = []
    for bars in combinations(range(C + N), N):
        prev = -1
        row = []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        rows.append(row)
    out = np.asarray(rows, np.int64).reshape(-1, N)
    order = np.lexsort(out.T[::-1])
    return out[order]


@dataclass
class TruncatedChain:
    N: int
    C: int
    boundary: str  # lower | finite
    states: np.ndarray
    Q: sp.csr_matrix
    a: np.ndarray
    b: np.ndarray
    env_name: str = ""

    @classmethod
    def from_env(cls, env: RateEnvironment, N: int, C: int, boundary: str = "lower") -> "TruncatedChain":
        if boundary not in ("lower", "finite"):
            raise ValueError("boundary must be 'lower' or 'finite'")
        if N < 1 or C < 1:
            raise ValueError("N and C must be >= 1")
        n_states = math.comb(N + C, N)
        if n_states > MAX_STATES:
            raise ValueError(f"{n_states} states exceed the limit of {MAX_STATES}")
        a = np.zeros(N + 2)
        b = np.zeros(N + 2)
        for k in range(1, N + 2):
            a[k], b[k] = rate_at(env, k)
        # only the rates at index N + 1 feed a boundary, so they may vanish
        if np.any(a[1 : N + 1] <= 0) or np.any(b[1 : N + 1] <= 0):
            raise HypothesisError("rates of particles 1..N must be positive")
        states = enumerate_states(N, C)
        Q = _generator(states, a, b, N, C, boundary == "finite")
        return cls(N, C, boundary, states, Q, a, b, env.name)

    @property
    def n_states(self) -> int:
        return len(self.states)

    def index(self, eta) -> int:
        eta = np.asarray(eta, np.int64)
        if eta.shape != (self.N,):
            raise ValueError(f"state must have length {self.N}")
        codes = _encode(self.states, self.C)
        code = _encode(eta[None, :], self.C)[0]
        i = int(np.searchsorted(codes, code))
        if i >= len(codes) or codes[i] != code:
            raise ValueError(f"state {eta.tolist()} is not in the truncation")
        return i

    def boundary_mass(self, p: np.ndarray) -> float:
        return float(p[self.states.sum(axis=1) == self.C].sum())


def _encode(states: np.ndarray, C: int) -> np.ndarray:
    # mixed radix, most significant digit first, so lexicographic order is preserved
    base = C + 1
    code = np.zeros(len(states), np.int64)
    for j in range(states.shape[1]):
        code = code * base + states[:, j]
    return code


def _generator(states, a, b, N, C, finite) -> sp.csr_matrix:
    codes = _encode(states, C)
    tot = states.sum(axis=1)
    n = len(states)
    rows, cols, vals = [], [], []

    def add(mask, new, rate):
        if rate <= 0 or not mask.any():
            return
        src = np.flatnonzero(mask)
        dst = np.searchsorted(codes, _encode(new[mask], C))
        rows.append(src)
        cols.append(dst)
        vals.append(np.full(len(src), rate))

    room = tot < C
    new = states.copy()
    new[:, 0] += 1
    add(room, new, a[1])
    if finite:
        new = states.copy()
        new[:, N - 1] += 1
        add(room, new, b[N + 1])
    for k in range(1, N + 1):
        occ = states[:, k - 1] > 0
        new = states.copy()
        new[:, k - 1] -= 1
        if k > 1:
            new[:, k - 2] += 1
        add(occ, new, b[k])
        new = states.copy()
        new[:, k - 1] -= 1
        if k < N:
            new[:, k] += 1
        add(occ, new, a[k + 1])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    v = np.concatenate(vals)
    Q = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    Q = Q - sp.diags(np.asarray(Q.sum(axis=1)).ravel())
    return Q.tocsr()


@dataclass(frozen=True)
class StationaryResult:
    p: np.ndarray
    boundary_mass: float
    residual: float

    def as_dict(self) -> dict:
        return {"boundary_mass": self.boundary_mass, "residual": self.residual}


def _check_cap(chain: TruncatedChain, p: np.ndarray, max_boundary_mass: float) -> float:
    m = chain.boundary_mass(p)
    if m > max_boundary_mass:
        raise CapError(
            f"boundary mass {m:.3g} at C={chain.C} exceeds {max_boundary_mass:.3g}; raise C"
        )
    return m


def stationary(chain: TruncatedChain, max_boundary_mass: float = DEFAULT_MAX_BOUNDARY) -> StationaryResult:
    """Solve ``pi Q = 0``, ``sum pi = 1`` directly."""
    n = chain.n_states
    QT = chain.Q.T.tocsr()
    if n <= DENSE_LIMIT:
        A = QT.toarray()
        A[-1, :] = 1.0
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        p = scipy.linalg.solve(A, rhs)
    else:
        A = QT.tolil()
        A[-1, :] = np.ones(n)
        rhs = np.zeros(n)
        rhs[-1] = 1.0
        p = spla.spsolve(A.tocsc(), rhs)
    p = np.maximum(p, 0.0)
    p /= p.sum()
    resid = float(np.linalg.norm(chain.Q.T @ p))
    m = _check_cap(chain, p, max_boundary_mass)
    return StationaryResult(p, m, resid)


@dataclass(frozen=True)
class TransientResult:
    p: np.ndarray
    t: float
    error_bound: float
    n_terms: int
    boundary_mass: float

    def as_dict(self) -> dict:
        return {
            "t": self.t,
            "error_bound": self.error_bound,
            "n_terms": self.n_terms,
            "boundary_mass": self.boundary_mass,
        }


def transient_distribution(
    chain: TruncatedChain,
    initial,
    t: float,
    tol: float = 1e-8,
    max_boundary_mass: float = DEFAULT_MAX_BOUNDARY,
) -> TransientResult:
    """Law at time ``t`` by uniformization.

    ``initial`` is a state (sequence of length ``N``) or a probability vector.
    The Poisson series is cut where the remaining weight drops below ``tol``;
    that weight is the reported ``error_bound`` on the L1 error.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    init = np.asarray(initial, float)
    if init.shape == (chain.N,):
        p0 = np.zeros(chain.n_states)
        p0[chain.index(init.astype(np.int64))] = 1.0
    elif init.shape == (chain.n_states,):
        p0 = init / init.sum()
    else:
        raise ValueError("initial must be a state or a distribution over states")
    lam = float(-chain.Q.diagonal().min())
    if t == 0 or lam == 0:
        return TransientResult(p0, t, 0.0, 1, chain.boundary_mass(p0))
    P = (sp.identity(chain.n_states, format="csr") + chain.Q / lam).T.tocsr()
    mu = lam * t
    n_max = int(poisson.isf(tol, mu)) + 1
    w = poisson.pmf(np.arange(n_max + 1), mu)
    acc = w[0] * p0
    v = p0
    for n in range(1, n_max + 1):
        v = P @ v
        acc += w[n] * v
    err = float(max(0.0, 1.0 - w.sum()))
    acc = np.maximum(acc, 0.0)
    m = _check_cap(chain, acc, max_boundary_mass)
    return TransientResult(acc, t, err, n_max + 1, m)


def product_form(chain: TruncatedChain, truncate: bool = True) -> np.ndarray:
    """``prod Geo(1 - rho_k)`` on the chain's states, from the traffic equation.

    With ``truncate`` the vector is renormalized on ``{sum <= C}``, which is
    the exact stationary law of the blocked chain.  Without it the raw
    product-form masses are returned (they sum to less than one).
    """
    env = RateEnvironment(tuple(zip(chain.a[1:], chain.b[1:])), name=chain.env_name)
    if chain.a[chain.N + 1] == 0 and (chain.boundary == "lower" or chain.b[chain.N + 1] == 0):
        # nothing crosses the far end, so the flux vanishes and rho = alpha
        rho = compute_tables(env.truncated(chain.N), chain.N).alpha[1:]
    else:
        fs = finite_speed(env, chain.N)
        rho = fs.rhoN if chain.boundary == "finite" else fs.rhoN0
    if np.any(rho <= 0) or np.any(rho >= 1):
        raise ValueError(f"traffic profile {rho} is not stable")
    p = np.prod((1.0 - rho) * rho ** chain.states, axis=1)
    return p / p.sum() if truncate else p


def marginal(chain: TruncatedChain, p: np.ndarray, k: int) -> np.ndarray:
    """Law of ``eta_k`` (1-based) under ``p`` as a vector over ``0..C``."""
    if not 1 <= k <= chain.N:
        raise ValueError("k out of range")
    return np.bincount(chain.states[:, k - 1], weights=p, minlength=chain.C + 1)
