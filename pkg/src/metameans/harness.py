"""Monte Carlo risk, ROC and rate-sweep experiments.

Null and alternative repetitions come from the ``null`` and ``alt``
children of the experiment stream, and thresholds that need calibration
come from its ``calibration`` child, so calibration never reuses
evaluation data.  Within one experiment every test is evaluated on the same
simulated batches.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .engine import DEFAULT_CHUNK, collect_statistics
from .metatest import build_test, calibrated_test
from .model import Scenario

__all__ = [
    "DEFAULT_ALPHAS",
    "RATES",
    "band",
    "joint_band",
    "RiskEstimate",
    "RocCurve",
    "RateCell",
    "RateSweepResult",
    "prepare_tests",
    "rejection_rates",
    "estimate_risk",
    "roc_curve",
    "rate_sweep",
]

DEFAULT_ALPHAS = tuple(round(0.01 * i, 2) for i in range(1, 100))

RATES = {
    "single": lambda d, m, n: math.sqrt(d) / n,
    "pooled": lambda d, m, n: math.sqrt(d) / (m * n),
    "sqrt-m": lambda d, m, n: math.sqrt(d) / (math.sqrt(m) * n),
    "directional": lambda d, m, n: d * math.sqrt(d) / (m * n),
    "coordinated": lambda d, m, n: d / (m * n),
}


def band(p, reps):
    """Three-sigma binomial band ``3 sqrt(p (1 - p) / reps)``."""
    return 3.0 * math.sqrt(p * (1.0 - p) / reps)


def joint_band(*bands):
    """Band for a sum or difference of independent estimates."""
    return math.sqrt(sum(b * b for b in bands))


@dataclass
class RiskEstimate:
    test: str
    scenario: dict
    alpha: float
    type1: float
    type1_band: float
    type2: float
    type2_band: float
    reps: int
    seed: int
    mode: str = "random"

    @property
    def risk(self):
        return self.type1 + self.type2


@dataclass
class RocCurve:
    """ROC points ``(alpha, fpr, tpr)`` for one test.

    ``null_digest`` and ``alt_digest`` fingerprint the simulated data; curves
    from one experiment share them.
    """

    test: str
    scenario: dict
    points: list
    reps: int
    seed: int
    level: str = "exact"
    supported: bool = True
    null_digest: str = ""
    alt_digest: str = ""

    @property
    def alphas(self):
        return np.array([p[0] for p in self.points])

    @property
    def fpr(self):
        return np.array([p[1] for p in self.points])

    @property
    def tpr(self):
        return np.array([p[2] for p in self.points])

    def tpr_at_fpr(self, target):
        """TPR at a false positive rate, with its band.

        For exact-level tests whose grid contains ``target`` the FPR equals
        the nominal level, so the TPR at that level is returned directly;
        otherwise the empirical ROC (anchored at (0,0) and (1,1)) is
        linearly interpolated.
        """
        if not self.supported:
            return 0.0, 0.0
        alphas = self.alphas
        hit = np.flatnonzero(np.isclose(alphas, target, rtol=0, atol=1e-12))
        if self.level == "exact" and hit.size:
            tpr = float(self.tpr[hit[0]])
        else:
            fpr = np.concatenate([[0.0], self.fpr, [1.0]])
            tpr_pts = np.concatenate([[0.0], self.tpr, [1.0]])
            order = np.argsort(fpr, kind="stable")
            tpr = float(np.interp(target, fpr[order], np.maximum.accumulate(tpr_pts[order])))
        return tpr, band(tpr, self.reps)


@dataclass
class RateCell:
    test: str
    d: int
    m: int
    n: int
    c: float
    rate: str
    rho2: float
    alpha: float
    power: float
    band: float
    reps: int
    seed: int


@dataclass
class RateSweepResult:
    cells: list
    elbow: list = field(default_factory=list)

    def power(self, test, d, m, n, c):
        for cell in self.cells:
            if (cell.test, cell.d, cell.m, cell.n, cell.c) == (test, d, m, n, c):
                return cell
        raise KeyError((test, d, m, n, c))


def prepare_tests(names, d, n, m, stream, alphas=DEFAULT_ALPHAS, rho=0.0, calib_reps=100_000, workers=1):
    """Build tests by name, calibrating from ``stream/calibration`` where needed."""
    cal = stream.derive("calibration")
    return [
        calibrated_test(name, d, n, m, alphas, calib_reps, cal.derive(name), rho=rho, workers=workers)
        for name in names
    ]


def _uses_shared(tests):
    return any(t.randomness == "shared" for t in tests)


def rejection_rates(tests, scenario, reps, stream, alphas, workers=1, chunk=DEFAULT_CHUNK, identity_projection=False):
    """Per-test rejection frequencies over ``alphas`` on common simulated data.

    Returns ``({name: rates}, digest)``.
    """
    stats, digest = collect_statistics(
        {t.name: t.statistic_values for t in tests},
        scenario,
        stream,
        reps,
        shared=_uses_shared(tests),
        chunk=chunk,
        workers=workers,
        identity_projection=identity_projection,
        digest=True,
    )
    rates = {t.name: t.decide(stats[t.name], alphas).mean(axis=0) for t in tests}
    return rates, digest


def estimate_risk(test, scenario, reps, stream, alpha=0.05, probe=False, workers=1):
    """Type I and Type II error frequencies for one test.

    The alternative draws a fresh Rademacher signal per repetition, a lower
    proxy for the worst case; ``probe=True`` instead fixes ``f = rho e_1``.
    """
    if reps < 100:
        raise ValueError("risk estimation needs at least 100 repetitions")
    alt = scenario.worst_case_probe() if probe else scenario
    null_rates, _ = rejection_rates([test], scenario.null(), reps, stream.derive("null"), [alpha], workers)
    alt_rates, _ = rejection_rates([test], alt, reps, stream.derive("alt"), [alpha], workers)
    t1 = float(null_rates[test.name][0])
    t2 = 1.0 - float(alt_rates[test.name][0]) if test.supported else 1.0
    return RiskEstimate(
        test.name,
        alt.as_dict(),
        alpha,
        t1,
        band(t1, reps),
        t2,
        band(t2, reps),
        reps,
        stream.seed,
        "worst-case" if probe else "random",
    )


def roc_curve(tests, scenario, alphas, reps, stream, workers=1):
    """ROC curves for several tests on common random numbers."""
    alphas = [float(a) for a in alphas]
    if any(not 0 < a < 1 for a in alphas) or np.any(np.diff(alphas) <= 0):
        raise ValueError("alphas must be strictly increasing in (0, 1)")
    fpr, null_digest = rejection_rates(tests, scenario.null(), reps, stream.derive("null"), alphas, workers)
    tpr, alt_digest = rejection_rates(tests, scenario, reps, stream.derive("alt"), alphas, workers)
    curves = []
    for t in tests:
        points = [(a, float(f), float(p)) for a, f, p in zip(alphas, fpr[t.name], tpr[t.name])]
        curves.append(
            RocCurve(
                t.name,
                scenario.as_dict(),
                points,
                reps,
                stream.seed,
                t.level,
                t.supported,
                null_digest,
                alt_digest,
            )
        )
    return curves


def rate_sweep(
    names,
    grid,
    c_values,
    rate,
    reps,
    stream,
    alpha=0.05,
    calib_reps=100_000,
    workers=1,
):
    """Power of each test at ``rho**2 = c * rate(d, m, n)`` over a grid.

    ``grid`` is an iterable of ``(d, m, n)``.  When both ``chisq-combined``
    and ``edgington-directional`` are swept, the result carries an elbow
    report with their power gap for every cell.
    """
    if rate not in RATES:
        raise ValueError(f"unknown rate {rate!r}; expected one of {sorted(RATES)}")
    grid = [tuple(int(v) for v in g) for g in grid]
    if not grid:
        raise ValueError("grid must be nonempty")
    cells = []
    for d, m, n in grid:
        cell_stream = stream.derive(f"cell:d={d},m={m},n={n}")
        tests = prepare_tests(names, d, n, m, cell_stream, alphas=(alpha,), calib_reps=calib_reps, workers=workers)
        for c in c_values:
            rho2 = float(c) * RATES[rate](d, m, n)
            rho = math.sqrt(rho2)
            tests_c = [
                build_test(t.name, d, n, m, rho) if t.name.startswith("evalue:")
                else t
                for t in tests
            ]
            scenario = Scenario(d, n, m, rho, "rademacher" if rho > 0 else "null")
            # the same alt stream for every c keeps noise common across the sweep
            rates, _ = rejection_rates(tests_c, scenario, reps, cell_stream.derive("alt"), [alpha], workers)
            for t in tests_c:
                power = float(rates[t.name][0])
                cells.append(
                    RateCell(t.name, d, m, n, float(c), rate, rho2, alpha, power, band(power, reps), reps, stream.seed)
                )
    result = RateSweepResult(cells)
    if "chisq-combined" in names and "edgington-directional" in names:
        for d, m, n in grid:
            for c in c_values:
                chi = result.power("chisq-combined", d, m, n, float(c))
                edg = result.power("edgington-directional", d, m, n, float(c))
                result.elbow.append(
                    {
                        "d": d,
                        "m": m,
                        "n": n,
                        "c": float(c),
                        "chisq_combined": chi.power,
                        "edgington_directional": edg.power,
                        "gap": edg.power - chi.power,
                        "band": joint_band(chi.band, edg.band),
                        "m_over_d2": m / d**2,
                    }
                )
    return result


def as_records(results):
    return [asdict(r) for r in results]
