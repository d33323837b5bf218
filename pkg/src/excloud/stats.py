"""Estimators that connect simulation output to the limit theorems.

All inputs are plain arrays so these work equally on engine summaries, the
coupling trajectories or hand-made test data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "MarginalHistogram",
    "SpeedEstimate",
    "InsufficientData",
    "geometric_pmf",
    "tv_to_geometric",
    "tv_product_geometric",
    "speed",
    "scaling_exponent",
    "ScalingFit",
    "occupation_fraction",
    "x1_at",
]


class InsufficientData(ValueError):
    pass


@dataclass(frozen=True)
class MarginalHistogram:
    """Time spent by queue ``k`` at each occupancy value.

    ``weights[m]`` is the time at value ``m``; when ``overflow`` is set the
    last entry instead collects every value ``>= len(weights) - 1``.
    """

    k: int
    weights: np.ndarray
    total_time: float
    overflow: bool = False

    @classmethod
    def from_weights(cls, k: int, weights, overflow: bool = False) -> "MarginalHistogram":
        w = np.asarray(weights, float)
        if np.any(w < 0):
            raise ValueError("weights must be non-negative")
        return cls(k, w, float(w.sum()), overflow)

    @classmethod
    def from_samples(cls, k: int, samples) -> "MarginalHistogram":
        s = np.asarray(samples, np.int64)
        return cls.from_weights(k, np.bincount(s).astype(float))

    @property
    def pmf(self) -> np.ndarray:
        return self.weights / self.total_time

    def mean(self) -> float:
        if self.overflow:
            raise ValueError("mean is not defined with an overflow bin")
        return float(np.dot(np.arange(len(self.weights)), self.pmf))


def geometric_pmf(rho: float, m) -> np.ndarray:
    """``P(Geo = m) = (1 - rho) rho^m`` on ``{0, 1, ...}``."""
    m = np.asarray(m)
    return (1.0 - rho) * np.power(rho, m)


def tv_to_geometric(hist: MarginalHistogram, rho: float) -> float:
    """Total variation distance between ``hist`` and ``Geo(1 - rho)`` on ``{0,1,...}``.

    The geometric mass beyond the histogram's support is added in closed form
    (``rho^M``), so nothing is truncated.
    """
    if not hist.total_time > 0:
        raise InsufficientData("histogram has no observation time")
    if not 0 <= rho < 1:
        raise ValueError("rho must lie in [0, 1)")
    p = hist.pmf
    M = len(p) - 1 if hist.overflow else len(p)
    g = geometric_pmf(rho, np.arange(M))
    d = np.abs(p[:M] - g).sum()
    tail = rho**M
    if hist.overflow:
        d += abs(p[M] - tail)
    else:
        d += tail
    return float(0.5 * d)


def tv_product_geometric(samples: np.ndarray, rho) -> float:
    """Joint TV between the empirical law of integer rows and ``prod Geo(1 - rho_k)``.

    Exact: the product measure's mass outside the observed rows is
    ``1 - sum over observed rows``, added in full.
    """
    x = np.asarray(samples, np.int64)
    rho = np.asarray(rho, float)
    if x.ndim != 2 or x.shape[1] != len(rho):
        raise ValueError("samples must be (n, len(rho))")
    rows, counts = np.unique(x, axis=0, return_counts=True)
    emp = counts / counts.sum()
    model = np.prod((1.0 - rho) * rho ** rows, axis=1)
    return float(0.5 * (np.abs(emp - model).sum() + max(0.0, 1.0 - model.sum())))


@dataclass(frozen=True)
class SpeedEstimate:
    value: float
    se: float
    n_batches: int

    def as_dict(self) -> dict:
        return {"value": self.value, "se": self.se, "n_batches": self.n_batches}


def x1_at(t_jumps, x_jumps, times, x0: int = 0) -> np.ndarray:
    """Evaluate a right-continuous jump path at ``times``; ``x0`` before the first jump."""
    t_jumps = np.asarray(t_jumps, float)
    idx = np.searchsorted(t_jumps, np.asarray(times, float), side="right") - 1
    xs = np.asarray(x_jumps)
    return np.where(idx >= 0, xs[np.maximum(idx, 0)], x0)


def speed(t, x1, burn_in: float | None = None, min_batches: int = 10) -> SpeedEstimate:
    """Slope of ``x1`` after burn-in, with a batch-means standard error.

    ``(t, x1)`` are samples on an equally spaced grid; each grid interval
    after ``burn_in`` is one batch.  Burn-in defaults to 10% of the span.
    """
    t = np.asarray(t, float)
    x = np.asarray(x1, float)
    if t.shape != x.shape or t.ndim != 1:
        raise ValueError("t and x1 must be 1-d arrays of equal length")
    if burn_in is None:
        burn_in = t[0] + 0.1 * (t[-1] - t[0])
    keep = t >= burn_in - 1e-12 * max(1.0, abs(burn_in))
    t, x = t[keep], x[keep]
    nb = len(t) - 1
    if nb < min_batches:
        raise InsufficientData(f"need >= {min_batches} batches after burn-in, got {max(nb, 0)}")
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("batches must have equal length")
    v = (x[-1] - x[0]) / (t[-1] - t[0])
    rates = np.diff(x) / dt
    se = float(rates.std(ddof=1) / math.sqrt(nb))
    return SpeedEstimate(float(v), se, nb)


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    se: float
    min_ratio: float
    max_ratio: float
    n_used: int
    dropped: int

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "se": self.se,
            "min_ratio": self.min_ratio,
            "max_ratio": self.max_ratio,
            "n_used": self.n_used,
            "dropped": self.dropped,
        }


def scaling_exponent(t, x1, t_min: float | None = None, t_max: float | None = None) -> ScalingFit:
    """OLS slope of ``log(-x1)`` on ``log t``.

    Samples with ``-x1 <= 0`` are dropped and counted.  ``min_ratio`` and
    ``max_ratio`` are the extremes of ``log(-x1) / log t`` over used samples.
    """
    t = np.asarray(t, float)
    y = -np.asarray(x1, float)
    m = np.ones(len(t), bool)
    if t_min is not None:
        m &= t >= t_min
    if t_max is not None:
        m &= t <= t_max
    t, y = t[m], y[m]
    ok = y > 0
    dropped = int((~ok).sum())
    t, y = t[ok], y[ok]
    if len(t) < 2:
        raise InsufficientData("need at least two samples with -x1 > 0")
    lt, ly = np.log(t), np.log(y)
    A = np.vstack([lt, np.ones_like(lt)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    slope = float(coef[0])
    if len(t) > 2:
        resid = ly - A @ coef
        s2 = resid @ resid / (len(t) - 2)
        se = float(math.sqrt(s2 / ((lt - lt.mean()) ** 2).sum()))
    else:
        se = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = ly / lt
    ratio = ratio[np.isfinite(ratio)]
    return ScalingFit(
        slope, se,
        float(ratio.min()) if ratio.size else math.nan,
        float(ratio.max()) if ratio.size else math.nan,
        len(t), dropped,
    )


def occupation_fraction(t, x1, sites, window: tuple[float, float] | None = None) -> float:
    """Fraction of ``window`` during which the step path ``x1`` sits in ``sites``.

    ``(t, x1)`` is a right-continuous path: ``x1[i]`` holds on ``[t[i], t[i+1])``
    and the last value holds to the window's end.
    """
    t = np.asarray(t, float)
    x = np.asarray(x1)
    lo, hi = (t[0], t[-1]) if window is None else window
    if not hi > lo:
        raise ValueError("window must have positive length")
    sites = np.asarray(sorted(set(int(s) for s in sites)), np.int64)
    if sites.size == 0:
        return 0.0
    starts = np.clip(t, lo, hi)
    ends = np.clip(np.append(t[1:], max(hi, t[-1])), lo, hi)
    inside = np.isin(x, sites)
    return float(((ends - starts) * inside).sum() / (hi - lo))
