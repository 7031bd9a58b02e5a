"""Signals and trial data for the many normal means model.

Each of ``m`` trials observes ``X_j = f + Z_j / sqrt(n)`` with
``Z_j ~ N(0, I_d)``; the task is to test ``f = 0`` against ``||f|| >= rho``.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "ConfigError",
    "SIGNAL_LAWS",
    "Scenario",
    "Signal",
    "TrialSet",
    "draw_signal",
    "gen_trials",
]

SIGNAL_LAWS = ("null", "rademacher", "fixed")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class Scenario:
    """One experiment configuration.

    ``signal_law`` is ``"rademacher"`` (``f_i = rho R_i / sqrt(d)`` with fresh
    random signs), ``"fixed"`` (the vector ``f``, which must have norm
    ``rho``) or ``"null"``.
    """

    d: int
    n: int
    m: int
    rho: float = 0.0
    signal_law: str = "rademacher"
    f: Optional[tuple] = None

    def __post_init__(self):
        for name in ("d", "n", "m"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not np.isfinite(self.rho) or self.rho < 0:
            raise ConfigError(f"rho must be a nonnegative real, got {self.rho!r}")
        if self.signal_law not in SIGNAL_LAWS:
            raise ConfigError(f"unknown signal law {self.signal_law!r}; expected one of {SIGNAL_LAWS}")
        if self.signal_law == "null" and self.rho != 0:
            raise ConfigError("null scenario requires rho = 0")
        if self.signal_law == "fixed":
            if self.f is None or len(self.f) != self.d:
                raise ConfigError("fixed signal law requires f of length d")
            norm = float(np.linalg.norm(np.asarray(self.f, dtype=float)))
            if abs(norm - self.rho) > 1e-12:
                raise ConfigError(f"fixed signal has norm {norm!r}, expected rho = {self.rho!r}")
            object.__setattr__(self, "f", tuple(float(v) for v in self.f))

    @property
    def rho2(self):
        return self.rho * self.rho

    def null(self):
        """The same (d, n, m) under the null hypothesis."""
        return Scenario(self.d, self.n, self.m, 0.0, "null")

    def with_rho(self, rho):
        if self.signal_law == "fixed":
            f = np.asarray(self.f) * (rho / self.rho) if self.rho > 0 else None
            if f is None:
                raise ConfigError("cannot rescale a zero fixed signal")
            return Scenario(self.d, self.n, self.m, rho, "fixed", tuple(f))
        law = "null" if rho == 0 else ("rademacher" if self.signal_law == "null" else self.signal_law)
        return Scenario(self.d, self.n, self.m, rho, law)

    def worst_case_probe(self):
        """Fixed signal ``rho * e_1``, adversarial for coordinate-wise tests."""
        f = np.zeros(self.d)
        f[0] = self.rho
        return Scenario(self.d, self.n, self.m, self.rho, "fixed", tuple(f))

    def as_dict(self):
        out = {"d": self.d, "n": self.n, "m": self.m, "rho": self.rho, "signal_law": self.signal_law}
        if self.f is not None:
            out["f"] = list(self.f)
        return out


@dataclass(frozen=True)
class Signal:
    f: np.ndarray

    @property
    def norm(self):
        return float(np.linalg.norm(self.f))


@dataclass
class TrialSet:
    """Row ``j`` of ``x`` is the observation of trial ``j``."""

    x: np.ndarray
    scenario: Scenario
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.x.shape != (self.scenario.m, self.scenario.d):
            raise ValueError(f"trial matrix shape {self.x.shape} does not match scenario")


def signal_from_signs(signs, rho):
    """``rho * signs / sqrt(d)``; has norm exactly ``rho`` up to rounding."""
    signs = np.asarray(signs, dtype=float)
    return rho * signs / np.sqrt(signs.shape[-1])


def draw_signal(scenario, stream):
    """Draw ``f`` according to the scenario's signal law.

    The Rademacher signs are always taken from the start of ``stream`` so
    that scenarios differing only in ``rho`` share the same direction.
    """
    d = scenario.d
    if scenario.signal_law == "null":
        return Signal(np.zeros(d))
    if scenario.signal_law == "fixed":
        return Signal(np.asarray(scenario.f, dtype=float))
    return Signal(signal_from_signs(stream.rademacher(d), scenario.rho))


def gen_trials(signal, scenario, stream, provenance=None):
    """Observations ``f + Z_j / sqrt(n)`` for ``j = 1..m`` with fresh noise."""
    f = np.asarray(signal.f if isinstance(signal, Signal) else signal, dtype=float)
    if f.shape != (scenario.d,):
        raise ValueError(f"signal has shape {f.shape}, expected ({scenario.d},)")
    z = stream.standard_normal((scenario.m, scenario.d))
    x = f + z / np.sqrt(scenario.n)
    prov = {"seed": stream.seed, "path": "/".join(stream.path)}
    if provenance:
        prov.update(provenance)
    return TrialSet(x, scenario, prov)
