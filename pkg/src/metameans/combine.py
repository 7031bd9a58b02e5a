"""Combination functions for p-values, e-values and raw statistics.

All combiners reduce over the last axis, so a ``(reps, m)`` array yields
``reps`` combined values.  Before a log or an inverse CDF, p-values are
clamped to ``[PROB_FLOOR, PROB_CEIL]`` on the side where the transform
diverges; each clamp is counted in :mod:`metameans.diagnostics`.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import logsumexp

from . import diagnostics
from .localstat import StatisticVector
from .specfun import PROB_CEIL, PROB_FLOOR, std_normal_quantile

__all__ = [
    "METHODS",
    "Combiner",
    "HolderReport",
    "fisher",
    "pearson",
    "mudholkar_george",
    "edgington",
    "stouffer",
    "tippett",
    "generalized_mean",
    "evalue_combine",
    "sum_stats",
    "get_combiner",
    "holder_certificate",
]

METHODS = (
    "fisher",
    "pearson",
    "mudholkar_george",
    "edgington",
    "stouffer",
    "tippett",
    "generalized_mean",
    "evalue_product",
    "evalue_average",
    "sum",
)


def _values(v):
    if isinstance(v, StatisticVector):
        v = v.values
    return np.asarray(v, dtype=float)


def _floor(p):
    low = p < PROB_FLOOR
    if np.any(low):
        diagnostics.record("pvalue_floor", np.count_nonzero(low))
        p = np.maximum(p, PROB_FLOOR)
    return p


def _ceil(p):
    high = p > PROB_CEIL
    if np.any(high):
        diagnostics.record("pvalue_ceil", np.count_nonzero(high))
        p = np.minimum(p, PROB_CEIL)
    return p


def _check_unit(p):
    if np.any((p < 0) | (p > 1)) or np.isnan(p).any():
        raise ValueError("p-values must lie in [0, 1]")
    return p


def fisher(pvec):
    """``-2 sum log p_j``; chi-square with ``2m`` degrees of freedom under the null."""
    p = _floor(_check_unit(_values(pvec)))
    return -2.0 * np.sum(np.log(p), axis=-1)


def pearson(pvec):
    """``-sum log(1 - p_j)``; small values are evidence against the null."""
    p = _ceil(_check_unit(_values(pvec)))
    return -np.sum(np.log1p(-p), axis=-1)


def mudholkar_george(pvec):
    """``-sum log(p_j (1 - p_j))``."""
    p = _ceil(_floor(_check_unit(_values(pvec))))
    return -np.sum(np.log(p) + np.log1p(-p), axis=-1)


def edgington(pvec):
    """``m^{-1/2} sum (p_j - 1/2)``."""
    p = _check_unit(_values(pvec))
    return np.sum(p - 0.5, axis=-1) / np.sqrt(p.shape[-1])


def stouffer(pvec):
    """``m^{-1/2} sum Phi^{-1}(p_j)``; standard normal under the null."""
    p = _ceil(_floor(_check_unit(_values(pvec))))
    return np.sum(std_normal_quantile(p), axis=-1) / np.sqrt(p.shape[-1])


def tippett(pvec):
    """``-m min_j (-log(1 - p_j))``, a monotone transform of ``min p``.

    The test rejects when this is at least ``log(1 - alpha)``.
    """
    p = _check_unit(_values(pvec))
    m = p.shape[-1]
    with np.errstate(divide="ignore"):
        s = -np.log1p(-p)
    return -m * np.min(s, axis=-1)


def generalized_mean(pvec, r):
    """Power mean ``(m^{-1} sum p_j^r)^{1/r}`` with the usual limits.

    ``r = 0`` is the geometric mean, ``-inf`` the minimum, ``+inf`` the
    maximum.  Values are rescaled by the extreme entry before powering so
    that large ``|r|`` does not overflow.
    """
    p = _check_unit(_values(pvec))
    r = float(r)
    if r == -np.inf:
        return np.min(p, axis=-1)
    if r == np.inf:
        return np.max(p, axis=-1)
    if r == 0:
        with np.errstate(divide="ignore"):
            return np.exp(np.mean(np.log(p), axis=-1))
    ref = np.min(p, axis=-1, keepdims=True) if r < 0 else np.max(p, axis=-1, keepdims=True)
    pos = ref > 0
    safe_ref = np.where(pos, ref, 1.0)
    # log1p/expm1 keep tiny |r| accurate; r * log(p / ref) <= 0 so nothing overflows
    with np.errstate(divide="ignore", invalid="ignore"):
        t = r * np.log(p / safe_ref)
        log_mean = np.log1p(np.mean(np.expm1(t), axis=-1, keepdims=True))
        out = np.where(pos, safe_ref * np.exp(log_mean / r), 0.0)
    return out[..., 0]


def evalue_combine(evec, mode, log=False):
    """Product or average of e-values.

    The product is accumulated in log space.  With ``log=True`` the log of
    the combined e-value is returned, which stays finite when the product
    overflows; an overflowing product without ``log`` is counted under the
    ``evalue_product_overflow`` diagnostic and returned as ``inf``.
    """
    if isinstance(evec, StatisticVector) and evec.log_values is not None:
        logs = evec.log_values
        e = evec.values
    else:
        e = _values(evec)
        if np.any(e < 0):
            raise ValueError("e-values must be nonnegative")
        with np.errstate(divide="ignore"):
            logs = np.log(e)
    if mode == "product":
        total = np.sum(logs, axis=-1)
    elif mode == "average":
        total = logsumexp(logs, axis=-1) - np.log(logs.shape[-1])
    else:
        raise ValueError(f"unknown e-value merging mode {mode!r}")
    if log:
        return total
    with np.errstate(over="ignore"):
        out = np.exp(total)
    diagnostics.record("evalue_product_overflow", np.count_nonzero(np.isinf(out) & np.isfinite(total)))
    return out


def sum_stats(svec):
    return np.sum(_values(svec), axis=-1)


_FUNCS = {
    "fisher": fisher,
    "pearson": pearson,
    "mudholkar_george": mudholkar_george,
    "edgington": edgington,
    "stouffer": stouffer,
    "tippett": tippett,
    "sum": sum_stats,
}


@dataclass(frozen=True)
class Combiner:
    """A named combination function with optional Hoelder constants ``(L, p, q)``."""

    method: str
    r: Optional[float] = None
    holder_constants: Optional[tuple] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown combiner {self.method!r}; expected one of {METHODS}")
        if self.method == "generalized_mean" and self.r is None:
            raise ValueError("generalized_mean needs an exponent r")

    def __call__(self, values):
        if self.method == "generalized_mean":
            return generalized_mean(values, self.r)
        if self.method == "evalue_product":
            return evalue_combine(values, "product")
        if self.method == "evalue_average":
            return evalue_combine(values, "average")
        return _FUNCS[self.method](values)

    def exact_level_r(self, m):
        """Whether the power-mean exponent admits an exact-level constant."""
        return self.r == -np.inf or (m > 1 and self.r >= 1.0 / (m - 1))


def get_combiner(name, r=None):
    """Look up a combiner by its config name, e.g. ``"fisher"``."""
    return Combiner(name, r)


@dataclass
class HolderReport:
    L: float
    p: float
    q: float
    pairs: int
    skipped: int
    max_ratio: float
    violations: int

    @property
    def passed(self):
        return self.violations == 0


def holder_certificate(combiner: Callable, L, p, q, sampler, trials, stream, rtol=1e-9):
    """Empirical check of ``|C(s) - C(s')| <= L (sum |s_j - s'_j|^p)^q``.

    ``sampler(stream, trials)`` returns two ``(trials, m)`` arrays of paired
    inputs.  Pairs with ``s == s'`` are skipped.  A pair counts as a
    violation when its ratio exceeds ``L`` by more than the relative
    rounding allowance ``rtol``.  ``p = inf`` uses the max-norm.
    """
    if trials < 1:
        raise ValueError("trials must be positive")
    s, s2 = sampler(stream, trials)
    s = np.asarray(s, dtype=float)
    s2 = np.asarray(s2, dtype=float)
    diff = np.abs(s - s2)
    if p == np.inf:
        dist = np.max(diff, axis=-1) ** q
    else:
        dist = np.sum(diff ** p, axis=-1) ** q
    keep = dist > 0
    num = np.abs(np.asarray(combiner(s)) - np.asarray(combiner(s2)))
    ratio = num[keep] / dist[keep]
    max_ratio = float(ratio.max()) if ratio.size else 0.0
    violations = int(np.count_nonzero(ratio > L * (1.0 + rtol)))
    return HolderReport(L, p, q, int(keep.sum()), int((~keep).sum()), max_ratio, violations)
