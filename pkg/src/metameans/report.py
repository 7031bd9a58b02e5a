"""Serialization of experiment results to CSV, JSON and SVG.

CSV and JSON output is a pure function of the results and config, so
re-emitting the same objects reproduces the same bytes.  When a config is
given it is echoed as one JSON line (``# config {...}`` in CSV, a top-level
``config`` key in JSON, an XML comment in SVG); :func:`read_config_echo`
recovers it for replay.
"""

import csv
import io
import json
from dataclasses import asdict

from .harness import RateCell, RateSweepResult, RiskEstimate, RocCurve

__all__ = ["FORMATS", "ROC_COLUMNS", "RISK_COLUMNS", "RATE_COLUMNS", "emit", "render", "read_config_echo"]

FORMATS = ("csv", "json", "svg")
ROC_COLUMNS = ("alpha", "fpr", "tpr", "test", "reps", "seed")
RISK_COLUMNS = ("test", "alpha", "type1", "type1_band", "type2", "type2_band", "reps", "seed", "mode", "d", "n", "m", "rho")
RATE_COLUMNS = ("test", "d", "m", "n", "c", "rate", "rho2", "alpha", "power", "band", "reps", "seed")
CONFIG_PREFIX = "# config "


def _flatten(results):
    if isinstance(results, (RocCurve, RiskEstimate, RateSweepResult)):
        results = [results]
    items = []
    for r in results:
        items.extend(r.cells if isinstance(r, RateSweepResult) else [r])
    return items


def _kind(items, kind):
    if kind is not None:
        return kind
    if not items:
        return "roc"
    first = items[0]
    if isinstance(first, RocCurve):
        return "roc"
    if isinstance(first, RiskEstimate):
        return "risk"
    if isinstance(first, RateCell):
        return "rates"
    raise TypeError(f"cannot emit {type(first).__name__}")


def _rows(items, kind):
    if kind == "roc":
        for c in items:
            for a, f, t in c.points:
                yield (a, f, t, c.test, c.reps, c.seed)
    elif kind == "risk":
        for r in items:
            s = r.scenario
            yield (r.test, r.alpha, r.type1, r.type1_band, r.type2, r.type2_band, r.reps, r.seed, r.mode,
                   s["d"], s["n"], s["m"], s["rho"])
    else:
        for c in items:
            yield tuple(getattr(c, k) for k in RATE_COLUMNS)


def _config_json(config):
    return json.dumps(config, sort_keys=True, separators=(",", ":"), default=str)


def _csv(items, kind, config):
    columns = {"roc": ROC_COLUMNS, "risk": RISK_COLUMNS, "rates": RATE_COLUMNS}[kind]
    buf = io.StringIO()
    if config is not None:
        buf.write(CONFIG_PREFIX + _config_json(config) + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in _rows(items, kind):
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue()


def _json(items, kind, extra, config):
    doc = {"kind": kind, "results": [asdict(i) for i in items]}
    if extra:
        doc["elbow"] = extra
    if config is not None:
        doc["config"] = config
    return json.dumps(doc, sort_keys=True, indent=2, default=str) + "\n"


_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _svg(items, kind, config, size=480, pad=48):
    if kind != "roc":
        raise ValueError("svg output is only available for ROC curves")
    span = size - 2 * pad

    def xy(fpr, tpr):
        return f"{pad + fpr * span:.2f},{pad + (1.0 - tpr) * span:.2f}"

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" viewBox="0 0 {size} {size}">']
    if config is not None:
        out.append("<!-- config " + _config_json(config).replace("--", "- -") + " -->")
    out.append(f'<rect x="{pad}" y="{pad}" width="{span}" height="{span}" fill="none" stroke="black"/>')
    out.append(f'<line x1="{pad}" y1="{pad + span}" x2="{pad + span}" y2="{pad}" stroke="gray" stroke-dasharray="4 4"/>')
    out.append(f'<text x="{size / 2}" y="{size - 12}" text-anchor="middle" font-size="12">FPR</text>')
    out.append(f'<text x="14" y="{size / 2}" text-anchor="middle" font-size="12" transform="rotate(-90 14 {size / 2})">TPR</text>')
    for i, c in enumerate(items):
        colour = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(xy(f, t) for _, f, t in [(0, 0.0, 0.0)] + list(c.points) + [(1, 1.0, 1.0)])
        out.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.5" points="{pts}"><title>{c.test}</title></polyline>')
        out.append(f'<text x="{pad + 8}" y="{pad + 16 + 14 * i}" font-size="11" fill="{colour}">{c.test}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render(results, fmt, config=None, kind=None):
    """Serialize results to a string; see :func:`emit`."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    elbow = []
    if isinstance(results, RateSweepResult):
        elbow = results.elbow
    elif not isinstance(results, (RocCurve, RiskEstimate)):
        results = list(results)
        for r in results:
            if isinstance(r, RateSweepResult):
                elbow.extend(r.elbow)
    items = _flatten(results)
    kind = _kind(items, kind)
    if fmt == "csv":
        return _csv(items, kind, config)
    if fmt == "json":
        return _json(items, kind, elbow, config)
    return _svg(items, kind, config)


def emit(results, fmt, path, config=None, kind=None):
    """Write results as ``csv``, ``json`` or ``svg`` to ``path``.

    ``results`` is a result object or a list of them (ROC curves, risk
    estimates or rate sweeps).  ``kind`` picks the CSV header for an empty
    list and defaults to ROC.  An unwritable path raises ``OSError``.
    """
    text = render(results, fmt, config, kind)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def read_config_echo(path):
    """Return the config echoed into an emitted file, or ``None``."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    if text.startswith(CONFIG_PREFIX):
        return json.loads(text[len(CONFIG_PREFIX):].splitlines()[0])
    if text.lstrip().startswith("{"):
        return json.loads(text).get("config")
    marker = "<!-- config "
    if marker in text:
        start = text.index(marker) + len(marker)
        return json.loads(text[start:text.index(" -->", start)].replace("- -", "--"))
    return None
