"""Command-line entry point: ``python -m metameans <subcommand>``.

Each subcommand reads a YAML config, applies flag overrides, validates the
result and writes one output file that echoes the resolved config.  A file
written by an earlier run is also accepted as ``--config`` and replays it.
"""

import argparse
import csv
import io
import json
import math
import sys

import numpy as np
import yaml

from . import harness, report
from .metatest import UnknownTestError, calibrated_test, validate_test_name
from .model import ConfigError, Scenario
from .quantize import binary_expand_array, bits_for_accuracy_array, bits_upper_bound, error_bound
from .rng import RandomStream

__all__ = ["ConfigError", "RHO2_RULES", "load_config", "resolve_config", "main"]

SUBCOMMANDS = ("roc", "risk", "rates", "calibrate", "quantize")

RHO2_RULES = {
    "quarter_sqrt_d": lambda d, m, n: math.sqrt(d) / (4 * n),
    "m_growth": lambda d, m, n: 9 * d / (16 * n * m),
    "d_growth": lambda d, m, n: 9 * math.sqrt(d) / (16 * n),
}

DEFAULTS = {
    "roc": {"reps": 2000, "alphas": "grid", "format": "csv", "signal_law": "rademacher", "probe": False},
    "risk": {"reps": 2000, "alpha": 0.05, "format": "csv", "signal_law": "rademacher", "probe": False},
    "rates": {"reps": 2000, "alpha": 0.05, "format": "csv"},
    "calibrate": {"reps": 100_000, "alphas": [0.01, 0.05, 0.1], "format": "csv"},
    "quantize": {"reps": 100_000, "eps": [0.1, 0.01], "law": "exponential", "format": "json"},
}
COMMON = {"calib_reps": 100_000, "workers": 1, "n": 30}


def load_config(path):
    """Parse a YAML config, or recover the config echoed into an output file."""
    echoed = None
    try:
        echoed = report.read_config_echo(path)
    except (ValueError, json.JSONDecodeError):
        echoed = None
    if echoed is not None:
        return dict(echoed)
    with open(path, encoding="utf-8") as fh:
        doc = yaml.safe_load(fh)
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ConfigError("config must be a key-value mapping")
    return doc


def _int(cfg, key, low=1):
    try:
        value = int(cfg[key])
    except KeyError:
        raise ConfigError(f"missing required key {key!r}") from None
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be an integer") from None
    if value < low or value != cfg[key]:
        raise ConfigError(f"{key} must be an integer >= {low}")
    return value


def _rho(cfg, d, m, n):
    given = [k for k in ("rho", "rho2", "rho2_rule") if cfg.get(k) is not None]
    if len(given) > 1:
        raise ConfigError(f"give only one of rho, rho2, rho2_rule (got {given})")
    if not given:
        raise ConfigError("missing signal strength: set rho, rho2 or rho2_rule")
    if "rho2_rule" in given:
        rule = cfg["rho2_rule"]
        if rule not in RHO2_RULES:
            raise ConfigError(f"unknown rho2_rule {rule!r}; expected one of {sorted(RHO2_RULES)}")
        return math.sqrt(RHO2_RULES[rule](d, m, n))
    if "rho2" in given:
        rho2 = float(cfg["rho2"])
        if rho2 < 0:
            raise ConfigError("rho2 must be nonnegative")
        return math.sqrt(rho2)
    return float(cfg["rho"])


def _tests(cfg):
    names = cfg.get("tests")
    if isinstance(names, str):
        names = [t.strip() for t in names.split(",") if t.strip()]
    if not names:
        raise ConfigError("missing required key 'tests'")
    for name in names:
        validate_test_name(name)
    return list(names)


def _alphas(cfg):
    a = cfg.get("alphas", "grid")
    if a == "grid":
        return list(harness.DEFAULT_ALPHAS)
    if isinstance(a, (int, float)):
        a = [a]
    a = [float(v) for v in a]
    if any(not 0 < v < 1 for v in a) or np.any(np.diff(a) <= 0):
        raise ConfigError("alphas must be strictly increasing in (0, 1)")
    return a


def resolve_config(command, cfg, overrides):
    """Merge defaults, file keys and flag overrides, then validate.

    Returns the fully resolved config as plain data.
    """
    out = dict(COMMON)
    out.update(DEFAULTS[command])
    out.update({k: v for k, v in cfg.items() if v is not None})
    out.update({k: v for k, v in overrides.items() if v is not None})
    out["command"] = command
    if out.get("seed") is None:
        raise ConfigError("missing required key 'seed' (needed for reproducibility)")
    seed = _int(out, "seed", low=0)
    if seed >= 2**64:
        raise ConfigError("seed must fit in 64 bits")
    _int(out, "reps")
    _int(out, "calib_reps")
    _int(out, "workers")
    if out["format"] not in report.FORMATS:
        raise ConfigError(f"unknown format {out['format']!r}")
    if out["format"] == "svg" and command != "roc":
        raise ConfigError("svg output is only available for roc")
    if command == "quantize":
        if out["law"] not in ("exponential", "normal"):
            raise ConfigError("law must be 'exponential' or 'normal'")
        eps = out["eps"] if isinstance(out["eps"], list) else [out["eps"]]
        out["eps"] = [float(e) for e in eps]
        if any(not 0 < e < 1 for e in out["eps"]):
            raise ConfigError("eps must lie in (0, 1)")
        return out
    out["tests"] = _tests(out)
    if command == "rates":
        if out.get("rate") not in harness.RATES:
            raise ConfigError(f"rate must be one of {sorted(harness.RATES)}")
        grid = out.get("grid")
        if not grid:
            raise ConfigError("missing required key 'grid' (list of [d, m, n])")
        out["grid"] = [[int(v) for v in g] for g in grid]
        if any(len(g) != 3 or min(g) < 1 for g in out["grid"]):
            raise ConfigError("grid entries must be positive [d, m, n] triples")
        if not out.get("c_values"):
            raise ConfigError("missing required key 'c_values'")
        out["c_values"] = [float(c) for c in out["c_values"]]
        return out
    d, m, n = _int(out, "d"), _int(out, "m"), _int(out, "n")
    if command == "calibrate":
        out["alphas"] = _alphas(out)
        return out
    out["resolved_rho"] = _rho(out, d, m, n)
    if command == "roc":
        out["alphas"] = _alphas(out)
    _scenario(out)
    return out


def _scenario(cfg):
    rho = cfg["resolved_rho"]
    return Scenario(cfg["d"], cfg["n"], cfg["m"], rho, cfg["signal_law"] if rho > 0 else "null")


def _run_roc(cfg, stream):
    sc = _scenario(cfg)
    tests = harness.prepare_tests(
        cfg["tests"], sc.d, sc.n, sc.m, stream, cfg["alphas"], sc.rho, cfg["calib_reps"], cfg["workers"]
    )
    if cfg["probe"]:
        sc = sc.worst_case_probe()
    curves = harness.roc_curve(tests, sc, cfg["alphas"], cfg["reps"], stream, cfg["workers"])
    for c in curves:
        tpr, b = c.tpr_at_fpr(0.1)
        note = "" if c.supported else " (unsupported: m < d)"
        print(f"{c.test}: tpr@fpr=0.1 {tpr:.4f} +/- {b:.4f}{note}")
    return curves


def _run_risk(cfg, stream):
    sc = _scenario(cfg)
    tests = harness.prepare_tests(
        cfg["tests"], sc.d, sc.n, sc.m, stream, [cfg["alpha"]], sc.rho, cfg["calib_reps"], cfg["workers"]
    )
    out = []
    for t in tests:
        r = harness.estimate_risk(t, sc, cfg["reps"], stream, cfg["alpha"], cfg["probe"], cfg["workers"])
        print(f"{t.name}: type1 {r.type1:.4f} +/- {r.type1_band:.4f}, type2 {r.type2:.4f} +/- {r.type2_band:.4f}")
        out.append(r)
    return out


def _run_rates(cfg, stream):
    res = harness.rate_sweep(
        cfg["tests"], cfg["grid"], cfg["c_values"], cfg["rate"], cfg["reps"], stream,
        cfg["alpha"], cfg["calib_reps"], cfg["workers"],
    )
    for name in cfg["tests"]:
        powers = [c.power for c in res.cells if c.test == name]
        print(f"{name}: power range [{min(powers):.4f}, {max(powers):.4f}] over {len(powers)} cells")
    return res


def _run_calibrate(cfg, stream):
    d, n, m = cfg["d"], cfg["n"], cfg["m"]
    cal = stream.derive("calibration")
    rows = []
    for name in cfg["tests"]:
        t = calibrated_test(name, d, n, m, cfg["alphas"], cfg["reps"], cal.derive(name), workers=cfg["workers"])
        kappas = [float(k) for k in t.kappas(cfg["alphas"])]
        source = "calibrated" if t.calibration is not None else "analytic"
        rows.append({"test": name, "alphas": cfg["alphas"], "kappas": kappas, "source": source})
        print(f"{name}: {source} thresholds " + ", ".join(f"{k:.6g}" for k in kappas))
    return rows


def _run_quantize(cfg, stream):
    g = stream.derive("quantize").generator
    reps = cfg["reps"]
    v = g.standard_exponential(reps) if cfg["law"] == "exponential" else g.standard_normal(reps)
    rows = []
    for eps in cfg["eps"]:
        bits = bits_for_accuracy_array(v, eps)
        err = np.abs(v - binary_expand_array(v, bits))
        bound_ok = bool(np.all(err <= error_bound(v, bits)))
        row = {
            "eps": eps,
            "mean_bits": float(bits.mean()),
            "bits_bound": float(np.mean(bits_upper_bound(v, eps))),
            "max_error": float(err.max()),
            "error_bound_holds": bound_ok,
        }
        rows.append(row)
        print(f"eps={eps}: mean bits {row['mean_bits']:.4f} <= bound {row['bits_bound']:.4f}, max error {row['max_error']:.3g}")
    return rows


def _emit_plain(rows, fmt, path, cfg):
    if fmt == "json":
        text = json.dumps({"config": cfg, "results": rows}, sort_keys=True, indent=2) + "\n"
    else:
        buf = io.StringIO()
        buf.write(report.CONFIG_PREFIX + json.dumps(cfg, sort_keys=True, separators=(",", ":")) + "\n")
        w = csv.writer(buf, lineterminator="\n")
        keys = list(rows[0]) if rows else []
        w.writerow(keys)
        for r in rows:
            w.writerow([json.dumps(v) if isinstance(v, list) else repr(v) if isinstance(v, float) else v for v in r.values()])
        text = buf.getvalue()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _parser():
    p = argparse.ArgumentParser(prog="metameans", description="Meta-analysis tests in the many normal means model.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="YAML config, or an earlier output file to replay")
        s.add_argument("--seed", type=int)
        s.add_argument("--reps", type=int)
        s.add_argument("--out", help="output path")
        s.add_argument("--format", choices=report.FORMATS)
        s.add_argument("--tests", help="comma-separated test names")
        s.add_argument("--workers", type=int)
    return p


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        overrides = {"seed": args.seed, "reps": args.reps, "out": args.out, "format": args.format,
                     "tests": args.tests, "workers": args.workers}
        cfg = resolve_config(args.command, cfg, overrides)
    except UnknownTestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    stream = RandomStream(int(cfg["seed"]))
    out = cfg.get("out") or f"{args.command}.{cfg['format']}"
    cfg["out"] = out
    runner = {"roc": _run_roc, "risk": _run_risk, "rates": _run_rates,
              "calibrate": _run_calibrate, "quantize": _run_quantize}[args.command]
    results = runner(cfg, stream)
    try:
        if args.command in ("roc", "risk", "rates"):
            kind = "rates" if args.command == "rates" else args.command
            report.emit(results, cfg["format"], out, config=cfg, kind=kind)
        else:
            _emit_plain(results, cfg["format"], out, cfg)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
