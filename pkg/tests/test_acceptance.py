"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py``.  Seeds and pilot-derived constants are
frozen below; the total runtime is a few minutes on one core.
"""

import math
import sys

import mpmath
import numpy as np
import pytest
from scipy import integrate, stats

from metameans.combine import edgington, evalue_combine, fisher, holder_certificate, stouffer, sum_stats, tippett
from metameans.harness import DEFAULT_ALPHAS, band, joint_band, prepare_tests, rate_sweep, rejection_rates, roc_curve
from metameans.localstat import StatisticVector, chisq_norm_stats, chisq_pvalues
from metameans.metatest import REGISTRY
from metameans.model import Scenario
from metameans.quantize import binary_expand_array, bits_for_accuracy_array, error_bound
from metameans.rng import RandomStream, sample_haar_orthogonal
from metameans.specfun import (
    chisq_cdf,
    chisq_quantile,
    chisq_sf,
    std_normal_cdf,
    std_normal_quantile,
    std_normal_sf,
    tippett_cdf,
)

mpmath.mp.dps = 30

# Constants for the rate checks, derived from the closed-form power oracles
# below (noncentral chi-square; Gaussian mixture over a uniform direction)
# and then frozen.  At these values the oracle power is >= 0.84 on every cell.
C_SQRT_M = 16.0
C_COORDINATED = 100.0
C_SMALL = 0.05
RATE_GRID = [(d, m, 30) for d in (8, 32) for m in (16, 64)]


def report(log, number, passed, detail):
    log.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
    return passed


# --------------------------------------------------------------------------
# 1. level validity
# --------------------------------------------------------------------------


def test_criterion_1_level_validity(acceptance_log):
    d, n, m, reps = 3, 30, 8, 100_000
    alphas = [0.01, 0.05, 0.1]
    root = RandomStream(101)
    rho = math.sqrt(math.sqrt(d) / (4 * n))
    # calibration draws from root/calibration, evaluation from root/null
    tests = prepare_tests(list(REGISTRY), d, n, m, root, alphas=alphas, rho=rho, calib_reps=200_000)
    rates, _ = rejection_rates(tests, Scenario(d, n, m), reps, root.derive("null"), alphas)
    failures = []
    for t in tests:
        for a, r in zip(alphas, rates[t.name]):
            b = band(a, reps)
            if r > a + b or (t.level == "exact" and r < a - b):
                failures.append(f"{t.name}@{a}={r:.4f}")
    worst = max(float(np.max(rates[t.name] - np.array(alphas))) for t in tests)
    ok = report(acceptance_log, 1, not failures, f"{len(tests)} tests x 3 levels; max excess {worst:+.4f}; failures {failures or 'none'}")
    assert ok


# --------------------------------------------------------------------------
# 2. ROC ordering at desk scale
# --------------------------------------------------------------------------


def _ordering_curves(d, root):
    n, m = 30, 20
    rho = math.sqrt(math.sqrt(d) / (4 * n))
    tests = prepare_tests(list(REGISTRY), d, n, m, root, rho=rho, calib_reps=100_000)
    return {c.test: c for c in roc_curve(tests, Scenario(d, n, m, rho), DEFAULT_ALPHAS, 2000, root)}


def _gap(hi, lo):
    return hi[0] - lo[0], joint_band(hi[1], lo[1])


def test_criterion_2_roc_ordering(acceptance_log):
    root = RandomStream(2024)
    notes, ok = [], True
    for d in (2, 5, 10, 20):
        curves = _ordering_curves(d, root.derive(f"d={d}"))
        at10 = {k: c.tpr_at_fpr(0.1) for k, c in curves.items()}
        pooled, single = at10["pooled"], at10["single-trial"]
        for name, est in at10.items():
            if name in ("pooled", "single-trial"):
                continue
            g1, b1 = _gap(pooled, est)
            g2, b2 = _gap(est, single)
            if g1 < -2 * b1 or g2 < -2 * b2:
                ok = False
                notes.append(f"(c) d={d} {name}")
        if d == 20:
            g, b = _gap(at10["chisq-combined"], at10["uncoordinated-directional"])
            ok &= g > 2 * b
            notes.append(f"(a) gap {g:.3f} vs 2 bands {2 * b:.3f}")
        if d == 2:
            at05 = {k: curves[k].tpr_at_fpr(0.05) for k in ("coordinated-projection", "uncoordinated-directional", "chisq-combined")}
            cp, ud, cc = at05["coordinated-projection"], at05["uncoordinated-directional"], at05["chisq-combined"]
            g, b = _gap(cp, ud)
            ok &= g >= -b
            for est in (cp, ud):
                g2, b2 = _gap(est, cc)
                ok &= g2 > 2 * b2
            notes.append(f"(b) coord {cp[0]:.3f} uncoord {ud[0]:.3f} chisq {cc[0]:.3f}")
    ok = report(acceptance_log, 2, ok, "; ".join(notes))
    assert ok


# --------------------------------------------------------------------------
# 3. growth of the directional advantage with m
# --------------------------------------------------------------------------


def test_criterion_3_m_growth(acceptance_log):
    d, n, reps = 5, 30, 100_000
    names = ["chisq-combined", "uncoordinated-directional", "edgington-directional"]
    root = RandomStream(7)
    est = {}
    for m in (30, 200):
        rho = math.sqrt(9 * d / (16 * n * m))
        tests = prepare_tests(names, d, n, m, root, alphas=(0.1,), calib_reps=100_000)
        curves = roc_curve(tests, Scenario(d, n, m, rho), [0.1], reps, root.derive(f"m{m}"))
        est[m] = {c.test: c.tpr_at_fpr(0.1) for c in curves}
    ok, notes = True, []
    for name in names[1:]:
        g30, b30 = _gap(est[30][name], est[30]["chisq-combined"])
        g200, b200 = _gap(est[200][name], est[200]["chisq-combined"])
        growth, b = g200 - g30, joint_band(b30, b200)
        ok &= growth > 2 * b
        notes.append(f"{name} gap {g30:.4f} -> {g200:.4f} (growth {growth:.4f}, 2 bands {2 * b:.4f})")
    ok = report(acceptance_log, 3, ok, "; ".join(notes))
    assert ok


# --------------------------------------------------------------------------
# 4. rate attainability
# --------------------------------------------------------------------------


def chisq_power_oracle(c, d, m, n, alpha=0.05):
    k = d * m
    lam = n * m * c * math.sqrt(d) / (math.sqrt(m) * n)
    return stats.ncx2.sf(stats.chi2.ppf(1 - alpha, k), k, lam)


def projection_power_oracle(c, d, alpha=0.05):
    # the projected mean is sqrt(c d) V with V the first coordinate of a uniform unit vector
    z = stats.norm.ppf(1 - alpha / 2)
    dens = lambda v: (1 - v * v) ** ((d - 3) / 2)  # noqa: E731
    norm = integrate.quad(dens, -1, 1)[0]
    s = math.sqrt(c * d)
    f = lambda v: dens(v) / norm * (stats.norm.cdf(s * v - z) + stats.norm.cdf(-s * v - z))  # noqa: E731
    return integrate.quad(f, -1, 1, limit=200)[0]


def test_criterion_4_rate_attainability(acceptance_log):
    alpha, reps = 0.05, 4000
    oracle_ok = all(chisq_power_oracle(C_SQRT_M, d, m, n) >= 0.84 for d, m, n in RATE_GRID)
    oracle_ok &= all(projection_power_oracle(C_COORDINATED, d) >= 0.84 for d in (8, 32))
    chi = rate_sweep(["chisq-combined"], RATE_GRID, [C_SQRT_M, C_SMALL], "sqrt-m", reps, RandomStream(11), alpha=alpha)
    proj = rate_sweep(["coordinated-projection"], RATE_GRID, [C_COORDINATED, C_SMALL], "coordinated", reps,
                      RandomStream(12), alpha=alpha)
    ok, lows, highs = oracle_ok, [], []
    for cell in chi.cells + proj.cells:
        if cell.c == C_SMALL:
            ok &= cell.power <= alpha + 0.1
            highs.append(cell.power)
        else:
            ok &= cell.power >= 0.8
            lows.append(cell.power)
    detail = (f"oracle ok {oracle_ok}; power at large C min {min(lows):.3f}; "
              f"power at C={C_SMALL} max {max(highs):.3f} (limit {alpha + 0.1:.2f})")
    ok = report(acceptance_log, 4, ok, detail)
    assert ok


# --------------------------------------------------------------------------
# 5. rotation invariance and direction sensitivity
# --------------------------------------------------------------------------


def test_criterion_5_rotation(acceptance_log):
    d, m, n, rho, reps, alpha = 4, 8, 30, 0.2, 100_000, 0.05
    names = ["chisq-combined", "edgington-directional", "uncoordinated-directional"]
    root = RandomStream(5)
    tests = prepare_tests(names, d, n, m, root, alphas=(alpha,), calib_reps=100_000)
    q = sample_haar_orthogonal(d, root.derive("Q"))
    e1 = np.eye(d)[0] * rho
    signals = {"e1": e1, "Qe1": q @ e1, "spread": np.full(d, rho / math.sqrt(d))}
    freq = {}
    for label, f in signals.items():
        sc = Scenario(d, n, m, rho, "fixed", f=tuple(f))
        rates, _ = rejection_rates(tests, sc, reps, root.derive("alt"), [alpha])
        freq[label] = {k: float(v[0]) for k, v in rates.items()}

    def diff(name, a, b):
        pa, pb = freq[a][name], freq[b][name]
        return abs(pa - pb), joint_band(band(pa, reps), band(pb, reps))

    g_rot, b_rot = diff("chisq-combined", "e1", "Qe1")
    g_dir, b_dir = diff("edgington-directional", "e1", "spread")
    g_unc, b_unc = diff("uncoordinated-directional", "e1", "spread")
    ok = g_rot <= 2 * b_rot and g_dir > 2 * b_dir
    detail = (f"chisq |f vs Qf| {g_rot:.4f} <= {2 * b_rot:.4f}; edgington-directional |e1 vs spread| "
              f"{g_dir:.4f} > {2 * b_dir:.4f}; uncoordinated-directional {g_unc:.4f} (2 bands {2 * b_unc:.4f}, "
              f"invariant for balanced partitions)")
    ok = report(acceptance_log, 5, ok, detail)
    assert ok


# --------------------------------------------------------------------------
# 6. combiner null laws
# --------------------------------------------------------------------------


def test_criterion_6_null_laws(acceptance_log):
    d, m, n, reps = 3, 8, 30, 100_000
    x = RandomStream(6).standard_normal((reps, m, d)) / math.sqrt(n)
    s = chisq_norm_stats(x, n=n)
    p = chisq_pvalues(s, d)
    u = -np.expm1(m * np.log1p(-p.values.min(axis=-1)))
    assert np.allclose(np.log1p(-u), tippett(p), atol=1e-9)
    pvals = {
        "fisher": stats.kstest(fisher(p), stats.chi2(2 * m).cdf).pvalue,
        "stouffer": stats.kstest(stouffer(p), "norm").pvalue,
        "tippett": stats.kstest(u, "uniform").pvalue,
        "sum": stats.kstest(sum_stats(s), stats.chi2(d * m).cdf).pvalue,
    }
    ok = all(v > 1e-3 for v in pvals.values())
    ok = report(acceptance_log, 6, ok, "KS p-values " + ", ".join(f"{k} {v:.3g}" for k, v in pvals.items()))
    assert ok


# --------------------------------------------------------------------------
# 7. Hoelder certificates
# --------------------------------------------------------------------------

HOLDER_M = 20
HOLDER_PAIRS = 100_000


def _pairs(draw):
    # half the pairs are independent; the other half differ in one trial only
    def sampler(stream, trials):
        s = draw(stream.derive("s"), (trials, HOLDER_M))
        s2 = draw(stream.derive("s2"), (trials, HOLDER_M))
        near = np.arange(trials) >= trials // 2
        j = stream.derive("j").generator.integers(0, HOLDER_M, trials)
        keep = s.copy()
        keep[np.arange(trials), j] = s2[np.arange(trials), j]
        return s, np.where(near[:, None], keep, s2)

    return sampler


def _tippett_form(s):
    # s_j = -log(1 - p_j); the combiner is -m min_j s_j
    return tippett(-np.expm1(-s))


def _log_product(s):
    e = np.exp(s)
    return evalue_combine(StatisticVector(e, "evalue", log_values=s), "product", log=True)


HOLDER_CASES = {
    "edgington": (edgington, HOLDER_M ** -0.5, lambda st, size: st.uniform(size)),
    "tippett-form": (_tippett_form, 1.0, lambda st, size: st.generator.standard_exponential(size)),
    "evalue-average": (lambda e: evalue_combine(e, "average"), 1.0 / HOLDER_M,
                       lambda st, size: st.generator.exponential(1.0, size)),
    "evalue-product-log": (_log_product, 1.0, lambda st, size: st.standard_normal(size)),
}
HOLDER_RESULTS = {}


@pytest.mark.parametrize("case", list(HOLDER_CASES))
def test_criterion_7_holder(case, acceptance_log):
    comb, L, draw = HOLDER_CASES[case]
    rep = holder_certificate(comb, L, 1, 1, _pairs(draw), HOLDER_PAIRS, RandomStream(7).derive(case))
    HOLDER_RESULTS[case] = rep
    if len(HOLDER_RESULTS) == len(HOLDER_CASES):
        ok = all(r.passed for r in HOLDER_RESULTS.values())
        report(acceptance_log, 7, ok, "; ".join(f"{k} violations {r.violations}/{r.pairs} max ratio/L {r.max_ratio / r.L:.3g}"
                                for k, r in HOLDER_RESULTS.items()))
    assert rep.violations == 0, f"{case}: {rep.violations} violations, max ratio {rep.max_ratio:.3g} vs L = {L}"


# --------------------------------------------------------------------------
# 8. quantizer
# --------------------------------------------------------------------------


def test_criterion_8_quantizer(acceptance_log):
    st = RandomStream(8)
    size = 1_000_000
    # magnitudes spread over 1e-3 .. 1e3
    x = st.derive("x").standard_normal(size) * 10.0 ** (st.derive("exp").uniform(size) * 6 - 3)
    k = np.floor(np.log2(np.abs(x) + 1)).astype(int)
    B = k + 2 + st.derive("extra").generator.integers(0, 40, size)
    err = np.abs(x - binary_expand_array(x, B))
    bound_ok = bool(np.all(err <= error_bound(x, B)))
    v = st.derive("v").generator.standard_exponential(size)
    lhs, rhs = {}, {}
    for eps in (0.1, 0.01):
        lhs[eps] = float(bits_for_accuracy_array(v, eps).mean())
        rhs[eps] = float(np.mean(np.maximum(np.log2(v), 0.0)) + 1 + math.log2(1 / eps) + 2)
    ok = bound_ok and all(lhs[e] <= rhs[e] for e in lhs)
    detail = (f"error bound on {size} inputs {bound_ok} (max err/bound {np.max(err / error_bound(x, B)):.3f}); "
              + "; ".join(f"eps={e}: E B {lhs[e]:.3f} <= {rhs[e]:.3f}" for e in lhs))
    ok = report(acceptance_log, 8, ok, detail)
    assert ok


# --------------------------------------------------------------------------
# 9. special functions
# --------------------------------------------------------------------------


def _mp_vec(f, *args):
    return np.array([float(f(*a)) for a in zip(*args)])


def _per_dof(f, x, dofs):
    out = np.empty_like(x)
    for k in np.unique(dofs):
        sel = dofs == k
        out[sel] = f(x[sel], int(k))
    return out


def test_criterion_9_special_functions(acceptance_log):
    g = RandomStream(9).generator
    npts = 10_000
    dofs = g.choice([1, 2, 3, 5, 10, 30, 100, 1000], npts)
    xs = stats.chi2.ppf(g.uniform(1e-6, 1 - 1e-6, npts), dofs)
    zs = np.linspace(-12, 12, npts)
    ps = np.concatenate([np.logspace(-15, -1, npts // 2), np.linspace(0.1, 1 - 1e-6, npts - npts // 2)])
    mp_ncdf = lambda z: mpmath.ncdf(z)  # noqa: E731
    dev = {
        "std_normal_cdf": np.max(np.abs(std_normal_cdf(zs) - _mp_vec(mp_ncdf, zs))),
        "std_normal_sf": np.max(np.abs(std_normal_sf(zs) - _mp_vec(lambda z: mpmath.ncdf(-z), zs))),
        "std_normal_quantile": np.max(np.abs(std_normal_quantile(ps) - _mp_vec(
            lambda p: -mpmath.sqrt(2) * mpmath.erfinv(1 - 2 * mpmath.mpf(p)), ps))),
        "chisq_cdf": np.max(np.abs(_per_dof(chisq_cdf, xs, dofs) - _mp_vec(
            lambda x, k: mpmath.gammainc(mpmath.mpf(int(k)) / 2, 0, mpmath.mpf(x) / 2, regularized=True), xs, dofs))),
        "chisq_sf": np.max(np.abs(_per_dof(chisq_sf, xs, dofs) - _mp_vec(
            lambda x, k: mpmath.gammainc(mpmath.mpf(int(k)) / 2, mpmath.mpf(x) / 2, mpmath.inf, regularized=True),
            xs, dofs))),
        "chisq_quantile": np.max(np.abs(_per_dof(chisq_quantile, ps, dofs) - stats.chi2.ppf(ps, dofs))),
        "tippett_cdf": np.max(np.abs(tippett_cdf(ps, 20) - _mp_vec(lambda p: 1 - (1 - mpmath.mpf(p)) ** 20, ps))),
    }
    k = 10 ** 6
    eta = {a: abs((chisq_quantile(1 - a, k) - k) / math.sqrt(2 * k) - std_normal_quantile(1 - a))
           for a in (0.05, 0.5, 0.95)}
    ok = all(v <= 1e-9 for v in dev.values()) and all(v <= 0.01 for v in eta.values())
    detail = ("max abs deviation " + ", ".join(f"{k} {v:.1e}" for k, v in dev.items())
              + "; eta error " + ", ".join(f"{a}: {v:.4f}" for a, v in eta.items()))
    ok = report(acceptance_log, 9, ok, detail)
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
