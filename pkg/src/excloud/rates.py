"""Rate environments for the semi-infinite exclusion process.

Particle ``k`` (counted from the left, ``k >= 1``) attempts left jumps at
rate ``a_k`` and right jumps at rate ``b_k``.  An environment is a finite
prefix of explicit ``(a, b)`` pairs followed by an analytic tail rule, so
that tail questions (divergence of series, limits of recursions) can be
answered exactly rather than by truncation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ConstantTail",
    "FactorialTail",
    "NoTail",
    "CustomTail",
    "RateEnvironment",
    "Verdict",
    "Hypotheses",
    "HypothesisError",
    "rate_at",
    "check_hypotheses",
    "homogeneous",
    "dog_sheep",
    "one_sheep_many_dogs",
    "factorial",
    "dog_and_n_sheep",
    "GOLDEN",
]

# beyond this index k! is evaluated through lgamma
_FACTORIAL_LOG_SWITCH = 150


class HypothesisError(ValueError):
    """Raised when an environment violates a standing rate hypothesis."""


class Verdict(str, Enum):
    HOLDS = "holds"
    FAILS = "fails"
    UNDECIDABLE = "undecidable"


@dataclass(frozen=True)
class ConstantTail:
    """``a_k = a, b_k = b`` for every index beyond the prefix."""

    a: float
    b: float
    kind = "constant"

    def at(self, k: int) -> tuple[float, float]:
        return self.a, self.b


@dataclass(frozen=True)
class FactorialTail:
    """``a_k = a * k!`` and ``b_k = (k+1)!`` beyond the prefix."""

    a: float
    kind = "factorial"

    def at(self, k: int) -> tuple[float, float]:
        if k <= _FACTORIAL_LOG_SWITCH:
            fk = float(math.factorial(k))
            return self.a * fk, fk * (k + 1)
        la, lb = self.log_at(k)
        return math.exp(la), math.exp(lb)

    def log_at(self, k: int) -> tuple[float, float]:
        return math.log(self.a) + math.lgamma(k + 1), math.lgamma(k + 2)


@dataclass(frozen=True)
class NoTail:
    """Environment defined only on its prefix (finite systems)."""

    kind = "none"


@dataclass(frozen=True)
class CustomTail:
    """Arbitrary programmatic tail ``k -> (a_k, b_k)``.

    Nothing can be decided exactly about such a tail; analyses fall back to
    bounded-depth verdicts.
    """

    func: Callable[[int], tuple[float, float]]
    kind = "custom"

    def at(self, k: int) -> tuple[float, float]:
        a, b = self.func(k)
        return float(a), float(b)


Tail = ConstantTail | FactorialTail | NoTail | CustomTail


@dataclass(frozen=True)
class RateEnvironment:
    """Rates ``(a_k, b_k)`` for ``k = 1, 2, ...``.

    Parameters
    ----------
    prefix : sequence of (a, b)
        Explicit rates for particles ``1..len(prefix)``.
    tail : tail rule
        Rates for particles beyond the prefix.
    name : str, optional
        Label used in reports.
    """

    prefix: tuple[tuple[float, float], ...] = ()
    tail: Tail = field(default_factory=NoTail)
    name: str = ""

    def __post_init__(self):
        pref = tuple((float(a), float(b)) for a, b in self.prefix)
        for a, b in pref:
            if not (math.isfinite(a) and math.isfinite(b)) or a < 0 or b < 0:
                raise ValueError(f"rates must be finite and non-negative, got {(a, b)}")
        object.__setattr__(self, "prefix", pref)
        if isinstance(self.tail, ConstantTail):
            if self.tail.a < 0 or self.tail.b < 0 or not math.isfinite(self.tail.a + self.tail.b):
                raise ValueError("constant tail rates must be finite and non-negative")
        if isinstance(self.tail, FactorialTail) and not self.tail.a > 0:
            raise ValueError("factorial tail scale must be positive")
        if isinstance(self.tail, NoTail) and not pref:
            raise ValueError("an environment without tail needs a non-empty prefix")

    @property
    def L(self) -> int:
        """Prefix length."""
        return len(self.prefix)

    @property
    def max_index(self) -> int | None:
        """Largest valid index, or None when rates exist for every k."""
        return self.L if isinstance(self.tail, NoTail) else None

    def rate_at(self, k: int) -> tuple[float, float]:
        return rate_at(self, k)

    def arrays(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(a, b)`` as float arrays of length ``n + 1`` with slot 0 unused."""
        a = np.zeros(n + 1)
        b = np.zeros(n + 1)
        for k in range(1, n + 1):
            a[k], b[k] = rate_at(self, k)
        return a, b

    def log_arrays(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Like :meth:`arrays` but in log domain (safe for factorial growth)."""
        la = np.full(n + 1, -np.inf)
        lb = np.full(n + 1, -np.inf)
        for k in range(1, n + 1):
            if k > max(self.L, _FACTORIAL_LOG_SWITCH) and isinstance(self.tail, FactorialTail):
                la[k], lb[k] = self.tail.log_at(k)
            else:
                a, b = rate_at(self, k)
                with np.errstate(divide="ignore"):
                    la[k], lb[k] = np.log(a), np.log(b)
        return la, lb

    def truncated(self, n: int, name: str | None = None) -> "RateEnvironment":
        """Materialize the first ``n`` rate pairs as a tail-less environment."""
        pairs = tuple(rate_at(self, k) for k in range(1, n + 1))
        return RateEnvironment(pairs, NoTail(), self.name if name is None else name)

    # -- serialization -------------------------------------------------

    def to_dict(self) -> dict:
        tail = self.tail
        if isinstance(tail, ConstantTail):
            t = {"kind": "constant", "a": tail.a, "b": tail.b}
        elif isinstance(tail, FactorialTail):
            t = {"kind": "factorial", "a": tail.a}
        elif isinstance(tail, NoTail):
            t = {"kind": "none"}
        else:
            raise TypeError("custom tails cannot be serialized")
        out = {"prefix": [list(p) for p in self.prefix], "tail": t}
        if self.name:
            out["name"] = self.name
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "RateEnvironment":
        allowed = {"prefix", "tail", "name"}
        extra = set(d) - allowed
        if extra:
            raise ValueError(f"unknown environment keys: {sorted(extra)}")
        prefix = tuple(tuple(p) for p in d.get("prefix", []))
        if any(len(p) != 2 for p in prefix):
            raise ValueError("prefix entries must be [a, b] pairs")
        t = dict(d.get("tail", {"kind": "none"}))
        kind = t.pop("kind", None)
        if kind == "constant":
            tail = ConstantTail(float(t.pop("a")), float(t.pop("b")))
        elif kind == "factorial":
            tail = FactorialTail(float(t.pop("a")))
        elif kind == "none":
            tail = NoTail()
        else:
            raise ValueError(f"unknown tail kind {kind!r}")
        if t:
            raise ValueError(f"unknown tail keys: {sorted(t)}")
        return cls(prefix, tail, d.get("name", ""))


def rate_at(env: RateEnvironment, k: int) -> tuple[float, float]:
    """Rates ``(a_k, b_k)`` of particle ``k`` (1-based)."""
    if k < 1:
        raise IndexError(f"particle index must be >= 1, got {k}")
    if k <= env.L:
        return env.prefix[k - 1]
    if isinstance(env.tail, NoTail):
        raise IndexError(f"index {k} beyond prefix of length {env.L} (no tail)")
    return env.tail.at(k)


@dataclass(frozen=True)
class Hypotheses:
    A0: Verdict
    A1: Verdict
    A2: Verdict

    def as_dict(self) -> dict:
        return {"A0": self.A0.value, "A1": self.A1.value, "A2": self.A2.value}


def check_hypotheses(env: RateEnvironment) -> Hypotheses:
    """Decide positivity (A0), divergence of sum 1/a_k (A1) and boundedness (A2)."""
    pref_pos = all(a > 0 and b > 0 for a, b in env.prefix)
    tail = env.tail
    if isinstance(tail, ConstantTail):
        a0 = pref_pos and tail.a > 0 and tail.b > 0
        # a constant positive tail makes sum 1/a_k diverge and keeps rates bounded
        a1 = Verdict.HOLDS if tail.a > 0 else Verdict.FAILS
        return Hypotheses(Verdict(_hv(a0)), a1, Verdict.HOLDS)
    if isinstance(tail, FactorialTail):
        return Hypotheses(Verdict(_hv(pref_pos)), Verdict.FAILS, Verdict.FAILS)
    if isinstance(tail, NoTail):
        return Hypotheses(Verdict(_hv(pref_pos)), Verdict.UNDECIDABLE, Verdict.UNDECIDABLE)
    a0 = Verdict.FAILS if not pref_pos else Verdict.UNDECIDABLE
    return Hypotheses(a0, Verdict.UNDECIDABLE, Verdict.UNDECIDABLE)


def _hv(ok: bool) -> str:
    return "holds" if ok else "fails"


def require_positive(env: RateEnvironment) -> None:
    """Raise :class:`HypothesisError` unless A0 can hold for ``env``."""
    if check_hypotheses(env).A0 is Verdict.FAILS:
        raise HypothesisError(f"environment {env.name or env!r} violates positivity (A0)")


# -- named environments used throughout the package -------------------


def homogeneous(a: float, b: float) -> RateEnvironment:
    return RateEnvironment((), ConstantTail(a, b), f"homogeneous({a:g},{b:g})")


def dog_sheep(a: float = 0.5, b: float = 1.0, c: float = 1.0) -> RateEnvironment:
    """Leftmost particle with rates (a, b), all others (c, c); needs a < b."""
    return RateEnvironment(((a, b),), ConstantTail(c, c), f"dog_sheep({a:g},{b:g},{c:g})")


def one_sheep_many_dogs(a: float = 2.0, b: float = 1.0) -> RateEnvironment:
    """``a_1 = b_1 = 1`` and ``(a, b)`` with ``a > b`` for the rest."""
    return RateEnvironment(((1.0, 1.0),), ConstantTail(a, b), f"one_sheep_many_dogs({a:g},{b:g})")


def factorial(a: float) -> RateEnvironment:
    return RateEnvironment((), FactorialTail(a), f"factorial({a:g})")


def dog_and_n_sheep(n: int, a: float = 0.5) -> RateEnvironment:
    """Finite system of one dog and ``n`` sheep: ``n + 1`` particles, ``n`` queues."""
    pairs: Sequence[tuple[float, float]] = [(a, 1.0)] + [(1.0, 1.0)] * n
    return RateEnvironment(tuple(pairs), NoTail(), f"dog_and_{n}_sheep({a:g})")


GOLDEN = {
    "homogeneous_1_2": homogeneous(1.0, 2.0),
    "homogeneous_2_1": homogeneous(2.0, 1.0),
    "dog_sheep": dog_sheep(0.5, 1.0, 1.0),
    "one_sheep_many_dogs": one_sheep_many_dogs(2.0, 1.0),
    "factorial_0.5": factorial(0.5),
    "factorial_1": factorial(1.0),
    "factorial_2": factorial(2.0),
}
