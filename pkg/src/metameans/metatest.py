"""Meta-level tests ``1{C_m(S_1, ..., S_m) >= kappa_alpha}``.

A :class:`MetaTest` bundles a batched statistic (trial stack to one combined
value per repetition) with a threshold map ``alpha -> kappa_alpha``.  The map
is analytic when the null law of the combined statistic is known and a
:class:`CalibrationTable` of simulated null quantiles otherwise.  Calibrated
tests reject on strict inequality, which keeps them valid when the null
statistic has atoms.

Test names used in configs::

    chisq-combined  uncoordinated-directional  edgington-directional
    coordinated-projection  single-trial  pooled
    pvalue:<method>  (fisher, pearson, mudholkar_george, edgington,
                      stouffer, tippett, generalized_mean:<r>)
    evalue:<mode>    (product, average)
"""

import math
import warnings
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Optional

import numpy as np

from . import combine
from .engine import DEFAULT_CHUNK, collect_statistics
from .localstat import (
    StatisticVector,
    UnsupportedRegime,
    chisq_norm_stats,
    chisq_pvalues,
    directional_pvalues,
    directional_stats,
    lr_log_evalues,
    make_partition,
    projected_stats,
)
from .model import Scenario
from .specfun import chisq_quantile, std_normal_quantile

__all__ = [
    "REGISTRY",
    "UnknownTestError",
    "CalibrationTable",
    "MetaTest",
    "calibrate_threshold",
    "chisq_combined_test",
    "uncoordinated_directional_test",
    "edgington_directional_test",
    "coordinated_projection_test",
    "single_trial_test",
    "pooled_test",
    "pvalue_method_test",
    "evalue_test",
    "build_test",
    "validate_test_name",
    "needs_calibration",
    "calibrated_test",
]

REGISTRY = (
    "chisq-combined",
    "uncoordinated-directional",
    "edgington-directional",
    "coordinated-projection",
    "single-trial",
    "pooled",
    "pvalue:fisher",
    "pvalue:pearson",
    "pvalue:mudholkar_george",
    "pvalue:edgington",
    "pvalue:stouffer",
    "pvalue:tippett",
    "pvalue:generalized_mean:-inf",
    "pvalue:generalized_mean:1",
    "pvalue:generalized_mean:inf",
    "evalue:product",
    "evalue:average",
)

PVALUE_METHODS = ("fisher", "pearson", "mudholkar_george", "edgington", "stouffer", "tippett", "generalized_mean")
EVALUE_MODES = ("product", "average")
# a_{r,m} for the power means with closed-form valid constants
_GM_CONSTANTS = {-math.inf: None, 1.0: 2.0, math.inf: 1.0}


class UnknownTestError(KeyError):
    def __str__(self):
        return f"unknown test {self.args[0]!r}; registered tests: {', '.join(REGISTRY)}"


# --------------------------------------------------------------------------
# Calibration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationTable:
    """Simulated null thresholds on a grid of levels.

    ``kappas[i]`` is the order statistic of rank ``ceil((1 - alpha_i)(reps + 1))``
    of the simulated null statistics (``+inf`` when that rank exceeds
    ``reps``), so that ``P_0(C > kappa) <= alpha`` by exchangeability.
    """

    alphas: tuple
    kappas: tuple
    reps: int
    seed: int
    path: str

    def __post_init__(self):
        a = np.asarray(self.alphas)
        k = np.asarray(self.kappas)
        if a.shape != k.shape or a.ndim != 1:
            raise ValueError("alphas and kappas must be matching 1-d sequences")
        if np.any(np.diff(a) <= 0):
            raise ValueError("alphas must be strictly increasing")
        if np.any(np.diff(k) > 0):
            raise ValueError("kappas must be nonincreasing in alpha")

    @property
    def strictly_decreasing(self):
        return bool(np.all(np.diff(np.asarray(self.kappas)) < 0))

    def __call__(self, alpha):
        a = np.asarray(self.alphas)
        idx = np.flatnonzero(np.isclose(a, alpha, rtol=0, atol=1e-12))
        if idx.size == 0:
            raise ValueError(f"alpha={alpha} is not on the calibration grid")
        return self.kappas[idx[0]]

    def as_dict(self):
        return {
            "alphas": list(self.alphas),
            "kappas": list(self.kappas),
            "reps": self.reps,
            "seed": self.seed,
            "path": self.path,
        }


def _rank(alpha, reps):
    return math.ceil((1.0 - alpha) * (reps + 1) - 1e-9)


def calibration_from_sample(null_stats, alphas, reps, seed=0, path=""):
    alphas = tuple(sorted(float(a) for a in alphas))
    ordered = np.sort(np.asarray(null_stats, dtype=float))
    kappas = []
    for a in alphas:
        k = _rank(a, reps)
        kappas.append(float(ordered[k - 1]) if k <= reps else math.inf)
    return CalibrationTable(alphas, tuple(kappas), reps, seed, path)


def calibrate_threshold(statistic, scenario, alphas, reps, stream, chunk=DEFAULT_CHUNK, workers=1):
    """Monte Carlo thresholds for ``statistic`` under the null of ``scenario``.

    ``statistic`` maps a :class:`~metameans.engine.TrialBatch` to one value per
    repetition.  ``kappa_alpha`` is the empirical ``(1 - alpha)``-quantile of
    ``reps`` null draws taken from ``stream``.
    """
    if reps < 1000:
        raise ValueError("calibration needs at least 1000 repetitions")
    alphas = [float(a) for a in alphas]
    if any(not 0 < a < 1 for a in alphas):
        raise ValueError("alphas must lie in (0, 1)")
    if min(alphas) * reps < 20:
        warnings.warn(
            f"alpha * reps = {min(alphas) * reps:g} < 20: tail quantile is unstable",
            RuntimeWarning,
            stacklevel=2,
        )
    null = scenario.null() if isinstance(scenario, Scenario) else Scenario(*scenario, rho=0.0, signal_law="null")
    stats = collect_statistics({"stat": statistic}, null, stream, reps, chunk=chunk, workers=workers)["stat"]
    return calibration_from_sample(stats, alphas, reps, stream.seed, "/".join(stream.path))


# --------------------------------------------------------------------------
# MetaTest
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MetaTest:
    """A level-alpha meta-analysis test.

    ``level`` is ``"exact"`` (``P_0(reject) = alpha``), ``"conservative"``
    (``<= alpha``) or ``"calibrated"`` (exact up to Monte Carlo error).
    ``supported`` is False when the test is undefined for the scenario
    (directional tests with ``m < d``); such a test never rejects.
    """

    name: str
    d: int
    n: int
    m: int
    statistic: Callable
    threshold: Callable
    level: str = "exact"
    sides: str = "one"
    strict: bool = False
    randomness: str = "local"
    supported: bool = True
    calibration: Optional[CalibrationTable] = field(default=None, compare=False)

    def kappa(self, alpha):
        if not 0 < alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        return float(self.threshold(alpha))

    def kappas(self, alphas):
        return np.array([self.kappa(a) for a in alphas])

    def statistic_values(self, batch):
        if not self.supported:
            return np.full(batch.reps, -np.inf)
        return self.statistic(batch)

    def decide(self, stats, alphas):
        """Rejection indicators of shape ``(len(stats), len(alphas))``."""
        stats = np.asarray(stats, dtype=float)[:, None]
        if not self.supported:
            return np.zeros((stats.shape[0], len(alphas)), dtype=bool)
        k = self.kappas(alphas)[None, :]
        return stats > k if self.strict else stats >= k

    def reject(self, batch, alpha):
        return self.decide(self.statistic_values(batch), [alpha])[:, 0]


# --------------------------------------------------------------------------
# Batched statistics; top-level so that tests pickle for worker processes
# --------------------------------------------------------------------------


def _block_matrix(part):
    a = np.zeros((part.m, part.d))
    a[np.arange(part.m), part.assignment] = 1.0
    return a


def _stat_chisq_combined(batch):
    return combine.sum_stats(chisq_norm_stats(batch.x, batch.n))


def _stat_uncoordinated(batch, part):
    s = directional_stats(batch.x, part, batch.n).values
    sums = s @ _block_matrix(part)
    return np.sqrt(part.d) / part.m * np.sum(sums * sums, axis=-1)


def _stat_edgington_directional(batch, part):
    p = directional_pvalues(directional_stats(batch.x, part, batch.n)).values
    sums = (p - 0.5) @ _block_matrix(part)
    return np.sqrt(part.d) / part.m * np.sum(sums * sums, axis=-1)


def _stat_projection(batch):
    s = projected_stats(batch.x, batch.haar, batch.n).values
    return np.abs(np.sum(s, axis=-1)) / np.sqrt(batch.m)


def _stat_single(batch):
    return chisq_norm_stats(batch.x[:, :1, :], batch.n).values[:, 0]


def _stat_pooled(batch):
    mean = batch.x.mean(axis=1)
    return batch.n * batch.m * np.sum(mean * mean, axis=-1)


def _stat_pvalue(batch, method, r=None, scale=1.0):
    p = chisq_pvalues(chisq_norm_stats(batch.x, batch.n), batch.d).values
    if method == "generalized_mean":
        return -scale * combine.generalized_mean(p, r)
    value = combine.get_combiner(method)(p)
    # orient so that large values are evidence against the null
    if method in ("pearson", "edgington", "stouffer"):
        return -value
    return value


def _evalue_direction(batch, rho):
    return rho * batch.shared_signs / np.sqrt(batch.d)


def _stat_evalue(batch, mode, rho):
    logs = lr_log_evalues(batch.x, _evalue_direction(batch, rho), batch.n)
    # only the logs are read when merging in log space
    evec = StatisticVector(np.ones_like(logs), "evalue", "shared", log_values=logs)
    return combine.evalue_combine(evec, mode, log=True)


# Thresholds


def _kappa_chisq(alpha, k, scale=1.0):
    return scale * chisq_quantile(1.0 - alpha, k)


def _kappa_two_sided_normal(alpha):
    return std_normal_quantile(1.0 - alpha / 2.0)


def _kappa_upper_normal(alpha):
    return std_normal_quantile(1.0 - alpha)


def _kappa_pearson(alpha, m):
    return -0.5 * chisq_quantile(alpha, 2 * m)


def _kappa_tippett(alpha):
    return math.log1p(-alpha)


def _kappa_neg_alpha(alpha):
    return -alpha


def _kappa_evalue(alpha):
    return math.log(1.0 / alpha)


def _unsupported(batch):
    return np.full(batch.reps, -np.inf)


def _never(alpha):
    return math.inf


# --------------------------------------------------------------------------
# Constructors
# --------------------------------------------------------------------------


def chisq_combined_test(d, n, m):
    """Sum of ``n ||X_j||^2`` against the chi-square(dm) upper quantile."""
    return MetaTest("chisq-combined", d, n, m, _stat_chisq_combined, partial(_kappa_chisq, k=d * m))


def _needs_calibration(name, calibration):
    if calibration is None:
        raise ValueError(f"{name} needs a CalibrationTable computed under the null at matching (d, n, m)")
    return calibration


def _unsupported_test(name, d, n, m):
    return MetaTest(name, d, n, m, _unsupported, _never, level="exact", supported=False)


def uncoordinated_directional_test(d, n, m, calibration=None):
    """Coordinate-partitioned test with block sums of ``sqrt(n) X_j[i]``.

    With ``d | m`` the statistic is ``d^{-1/2}`` times a chi-square(d)
    variable under the null and the threshold is analytic; unbalanced
    partitions require a calibration table.
    """
    name = "uncoordinated-directional"
    try:
        part = make_partition(m, d)
    except UnsupportedRegime:
        return _unsupported_test(name, d, n, m)
    stat = partial(_stat_uncoordinated, part=part)
    if part.balanced:
        return MetaTest(name, d, n, m, stat, partial(_kappa_chisq, k=d, scale=1.0 / math.sqrt(d)))
    cal = _needs_calibration(name, calibration)
    return MetaTest(name, d, n, m, stat, cal, level="calibrated", strict=True, calibration=cal)


def edgington_directional_test(d, n, m, calibration=None):
    """Edgington-style variant with ``p_j = Phi(sqrt(n) X_j[i])``; calibrated threshold."""
    name = "edgington-directional"
    try:
        part = make_partition(m, d)
    except UnsupportedRegime:
        return _unsupported_test(name, d, n, m)
    cal = _needs_calibration(name, calibration)
    stat = partial(_stat_edgington_directional, part=part)
    return MetaTest(name, d, n, m, stat, cal, level="calibrated", strict=True, calibration=cal)


def coordinated_projection_test(d, n, m):
    """Shared Haar projection; two-sided Gaussian threshold."""
    return MetaTest(
        "coordinated-projection",
        d,
        n,
        m,
        _stat_projection,
        _kappa_two_sided_normal,
        sides="two",
        randomness="shared",
    )


def single_trial_test(d, n, m):
    return MetaTest("single-trial", d, n, m, _stat_single, partial(_kappa_chisq, k=d))


def pooled_test(d, n, m):
    return MetaTest("pooled", d, n, m, _stat_pooled, partial(_kappa_chisq, k=d))


def _parse_r(text):
    text = text.strip().lower()
    if text in ("-inf", "-infinity"):
        return -math.inf
    if text in ("inf", "+inf", "infinity"):
        return math.inf
    return float(text)


def pvalue_method_test(method, d, n, m, calibration=None):
    """Combination of chi-square p-values ``1 - F_d(n ||X_j||^2)``.

    ``method`` is a combiner name, or ``generalized_mean:<r>``.  Fisher,
    Pearson, Stouffer and Tippett have exact analytic thresholds; the power
    means with ``r`` in ``{-inf, 1, inf}`` use the closed-form constants
    ``a = m, 2, 1``; everything else is calibrated.
    """
    base, _, arg = method.partition(":")
    if base not in PVALUE_METHODS:
        raise UnknownTestError(f"pvalue:{method}")
    name = f"pvalue:{method}"
    if base == "generalized_mean":
        if not arg:
            raise UnknownTestError(name)
        r = _parse_r(arg)
        if r in _GM_CONSTANTS:
            a = float(m) if r == -math.inf else _GM_CONSTANTS[r]
            stat = partial(_stat_pvalue, method=base, r=r, scale=a)
            return MetaTest(name, d, n, m, stat, _kappa_neg_alpha, level="conservative")
        cal = _needs_calibration(name, calibration)
        stat = partial(_stat_pvalue, method=base, r=r)
        return MetaTest(name, d, n, m, stat, cal, level="calibrated", strict=True, calibration=cal)
    if arg:
        raise UnknownTestError(name)
    stat = partial(_stat_pvalue, method=base)
    analytic = {
        "fisher": partial(_kappa_chisq, k=2 * m),
        "pearson": partial(_kappa_pearson, m=m),
        "stouffer": _kappa_upper_normal,
        "tippett": _kappa_tippett,
    }
    if base in analytic:
        return MetaTest(name, d, n, m, stat, analytic[base])
    cal = _needs_calibration(name, calibration)
    return MetaTest(name, d, n, m, stat, cal, level="calibrated", strict=True, calibration=cal)


def evalue_test(mode, d, n, m, rho):
    """Merged likelihood-ratio e-values thresholded at ``1/alpha``.

    Each trial's e-value tests against ``g = rho R / sqrt(d)`` with shared
    random signs ``R``; the statistic is the log of the merged e-value.
    """
    if mode not in EVALUE_MODES:
        raise UnknownTestError(f"evalue:{mode}")
    stat = partial(_stat_evalue, mode=mode, rho=float(rho))
    return MetaTest(f"evalue:{mode}", d, n, m, stat, _kappa_evalue, level="conservative", randomness="shared")


def validate_test_name(name):
    family, _, rest = name.partition(":")
    if name in REGISTRY:
        return name
    if family == "pvalue" and rest.partition(":")[0] in PVALUE_METHODS:
        if rest.startswith("generalized_mean"):
            try:
                _parse_r(rest.partition(":")[2])
            except ValueError:
                raise UnknownTestError(name) from None
        elif ":" in rest:
            raise UnknownTestError(name)
        return name
    if family == "evalue" and rest in EVALUE_MODES:
        return name
    raise UnknownTestError(name)


_SIMPLE = {
    "chisq-combined": chisq_combined_test,
    "coordinated-projection": coordinated_projection_test,
    "single-trial": single_trial_test,
    "pooled": pooled_test,
}


def build_test(name, d, n, m, rho=0.0, calibration=None):
    """Construct a registered test by its config name.

    ``calibration`` is a :class:`CalibrationTable` for tests that need one;
    ``rho`` sets the alternative used by the e-value tests.
    """
    validate_test_name(name)
    if name in _SIMPLE:
        return _SIMPLE[name](d, n, m)
    if name == "uncoordinated-directional":
        return uncoordinated_directional_test(d, n, m, calibration)
    if name == "edgington-directional":
        return edgington_directional_test(d, n, m, calibration)
    family, _, rest = name.partition(":")
    if family == "pvalue":
        return pvalue_method_test(rest, d, n, m, calibration)
    return evalue_test(rest, d, n, m, rho)


def needs_calibration(name, d, n, m):
    """Whether ``build_test(name, ...)`` requires a calibration table."""
    try:
        build_test(name, d, n, m)
    except ValueError as exc:
        return "CalibrationTable" in str(exc)
    return False


def calibrated_test(name, d, n, m, alphas, reps, stream, rho=0.0, chunk=DEFAULT_CHUNK, workers=1):
    """Build ``name``, calibrating its threshold first when it has no analytic one.

    The calibration draws from ``stream``, which should be distinct from the
    streams used to evaluate the test.
    """
    if not needs_calibration(name, d, n, m):
        return build_test(name, d, n, m, rho)
    # build with a placeholder to get the statistic, then calibrate it
    probe = build_test(name, d, n, m, rho, calibration=_PLACEHOLDER)
    table = calibrate_threshold(
        probe.statistic, Scenario(d, n, m, 0.0, "null"), alphas, reps, stream, chunk=chunk, workers=workers
    )
    return build_test(name, d, n, m, rho, calibration=table)


_PLACEHOLDER = CalibrationTable((0.5,), (0.0,), 0, 0, "placeholder")
