"""Per-trial statistics.

Every function works on a single trial matrix of shape ``(m, d)`` or on a
stack ``(..., m, d)`` of independent repetitions, and returns one value per
trial along the last axis.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import diagnostics
from .model import TrialSet
from .specfun import PROB_FLOOR, chisq_sf, std_normal_cdf

__all__ = [
    "KINDS",
    "EVALUE_CAP",
    "UnsupportedRegime",
    "StatisticVector",
    "Partition",
    "chisq_norm_stats",
    "chisq_pvalues",
    "make_partition",
    "directional_stats",
    "directional_pvalues",
    "projected_stats",
    "lr_log_evalues",
    "lr_evalues",
]

KINDS = ("raw", "pvalue", "evalue")
EVALUE_CAP = 1e300


class UnsupportedRegime(ValueError):
    """The statistic is undefined for this (m, d), e.g. a partition with m < d."""


@dataclass
class StatisticVector:
    """Local statistics, one per trial along the last axis.

    ``randomness`` is ``"local"`` or ``"shared"``; shared statistics depend on
    a common random object (the projection matrix) seen by every trial.
    """

    values: np.ndarray
    kind: str = "raw"
    randomness: str = "local"
    log_values: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown statistic kind {self.kind!r}")
        if self.kind == "pvalue" and ((self.values < 0) | (self.values > 1)).any():
            raise ValueError("p-values must lie in [0, 1]")
        if self.kind == "evalue" and (self.values < 0).any():
            raise ValueError("e-values must be nonnegative")


@dataclass(frozen=True)
class Partition:
    """Round-robin assignment of trials to coordinates (0-based)."""

    assignment: np.ndarray
    d: int

    @property
    def m(self):
        return len(self.assignment)

    def blocks(self):
        return [np.flatnonzero(self.assignment == i) for i in range(self.d)]

    @property
    def balanced(self):
        return self.m % self.d == 0


def _unpack(trials, n):
    if isinstance(trials, TrialSet):
        return trials.x, trials.scenario.n
    if n is None:
        raise TypeError("n is required when passing a raw trial array")
    return np.asarray(trials, dtype=float), n


def chisq_norm_stats(trials, n=None):
    """``n * ||X_j||^2``, chi-square with ``d`` degrees of freedom under the null."""
    x, n = _unpack(trials, n)
    return StatisticVector(n * np.einsum("...jk,...jk->...j", x, x))


def chisq_pvalues(stats, d):
    """Upper-tail chi-square p-values, floored at ``PROB_FLOOR``."""
    values = stats.values if isinstance(stats, StatisticVector) else np.asarray(stats)
    p = chisq_sf(values, d)
    low = p < PROB_FLOOR
    if np.any(low):
        diagnostics.record("pvalue_floor", np.count_nonzero(low))
        p = np.maximum(p, PROB_FLOOR)
    return StatisticVector(np.asarray(p, dtype=float), "pvalue")


def make_partition(m, d):
    """Trial ``j`` (0-based) goes to coordinate ``j mod d``; needs ``m >= d``."""
    if m < d:
        raise UnsupportedRegime(f"partition needs m >= d, got m={m}, d={d}")
    return Partition(np.arange(m) % d, d)


def directional_stats(trials, part, n=None):
    """``sqrt(n) * X_j[i]`` for the coordinate ``i`` that trial ``j`` is assigned."""
    x, n = _unpack(trials, n)
    if x.shape[-2] != part.m or x.shape[-1] != part.d:
        raise ValueError("partition does not match trial shape")
    return StatisticVector(np.sqrt(n) * x[..., np.arange(part.m), part.assignment])


def directional_pvalues(stats):
    """One-sided ``Phi(S_j)`` for directional statistics."""
    values = stats.values if isinstance(stats, StatisticVector) else np.asarray(stats)
    return StatisticVector(std_normal_cdf(values), "pvalue")


def projected_stats(trials, u, n=None):
    """First coordinate of ``sqrt(n) U X_j`` for a shared orthogonal ``U``.

    ``u`` is ``(d, d)`` or a stack ``(..., d, d)`` matching the leading axes
    of the trials.
    """
    x, n = _unpack(trials, n)
    u = np.asarray(u, dtype=float)
    first_row = u[..., 0, :]
    if first_row.ndim == 1:
        vals = x @ first_row
    else:
        vals = np.einsum("...k,...jk->...j", first_row, x)
    return StatisticVector(np.sqrt(n) * vals, randomness="shared")


def lr_log_evalues(trials, g, n=None):
    """``n <g, X_j> - n ||g||^2 / 2``, the log likelihood ratio of N(g, I/n) to N(0, I/n)."""
    x, n = _unpack(trials, n)
    g = np.asarray(g, dtype=float)
    if g.ndim == 1:
        inner = x @ g
    else:
        inner = np.einsum("...k,...jk->...j", g, x)
    return n * inner - 0.5 * n * np.sum(g * g, axis=-1)[..., None]


def lr_evalues(trials, g, n=None, randomness="local"):
    """Likelihood-ratio e-values against the simple alternative ``f = g``.

    Values above ``EVALUE_CAP`` are clipped and counted under the
    ``evalue_overflow`` diagnostic; the unclipped logs are kept.
    """
    logs = lr_log_evalues(trials, g, n)
    with np.errstate(over="ignore"):
        vals = np.exp(logs)
    over = ~(vals <= EVALUE_CAP)
    if np.any(over):
        diagnostics.record("evalue_overflow", np.count_nonzero(over))
        vals = np.minimum(vals, EVALUE_CAP)
    return StatisticVector(vals, "evalue", randomness, log_values=logs)
