"""Batched Monte Carlo simulation keyed by repetition index.

Repetition ``r`` always draws from ``root/rep:r/...`` so the simulated data
depend only on the root stream and ``r``; chunk size and worker count
change nothing but wall time.
"""

import hashlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import signal_from_signs
from .rng import batch_draw, haar_from_gaussian

__all__ = ["TrialBatch", "simulate_batch", "collect_statistics", "DEFAULT_CHUNK"]

DEFAULT_CHUNK = 4096


@dataclass
class TrialBatch:
    """A stack of trial sets, one per repetition.

    ``x`` has shape ``(reps, m, d)``.  ``shared_gauss`` holds the Gaussian
    matrices behind the shared Haar projection and ``shared_signs`` the
    shared Rademacher direction used by likelihood-ratio e-values.
    """

    x: np.ndarray
    n: int
    rep_index: np.ndarray
    f: np.ndarray
    shared_gauss: Optional[np.ndarray] = None
    shared_signs: Optional[np.ndarray] = None
    _haar: Optional[np.ndarray] = None

    @property
    def reps(self):
        return self.x.shape[0]

    @property
    def m(self):
        return self.x.shape[1]

    @property
    def d(self):
        return self.x.shape[2]

    @property
    def haar(self):
        if self._haar is None:
            if self.shared_gauss is None:
                raise ValueError("batch was simulated without shared randomness")
            self._haar = haar_from_gaussian(self.shared_gauss)
        return self._haar


def _normal(shape):
    return lambda g: g.standard_normal(shape)


def _signs(size):
    return lambda g: g.integers(0, 2, size=size, dtype=np.int8).astype(float) * 2.0 - 1.0


def simulate_batch(scenario, root, rep_index, shared=True, identity_projection=False):
    """Simulate repetitions ``rep_index`` of ``scenario`` under ``root``.

    Per repetition ``r``: Rademacher signal signs from ``rep:r/signal``,
    noise from ``rep:r/noise`` and shared randomness from ``rep:r/shared``.
    Noise and signs do not depend on ``rho``, so sweeps over ``rho`` reuse
    the same noise.  ``identity_projection`` replaces the Haar matrix by the
    identity, for checking the projection test against closed forms.
    """
    rep_index = np.asarray(rep_index, dtype=np.int64)
    d, m, n = scenario.d, scenario.m, scenario.n
    reps = [root.derive(f"rep:{int(r)}") for r in rep_index]
    z = batch_draw([s.derive("noise") for s in reps], _normal((m, d)))
    if scenario.signal_law == "null":
        f = np.zeros((len(reps), d))
    elif scenario.signal_law == "fixed":
        f = np.broadcast_to(np.asarray(scenario.f, dtype=float), (len(reps), d)).copy()
    else:
        signs = batch_draw([s.derive("signal") for s in reps], _signs(d))
        f = signal_from_signs(signs, scenario.rho)
    x = f[:, None, :] + z / np.sqrt(n)
    batch = TrialBatch(x, n, rep_index, f)
    if shared:
        shared_streams = [s.derive("shared") for s in reps]
        batch.shared_gauss = batch_draw(shared_streams, _normal((d, d)))
        batch.shared_signs = batch_draw([s.derive("evalue-direction") for s in shared_streams], _signs(d))
        if identity_projection:
            batch._haar = np.broadcast_to(np.eye(d), (len(reps), d, d))
    return batch


def _run_chunk(args):
    statistics, scenario, root, rep_index, shared, identity_projection, digest = args
    batch = simulate_batch(scenario, root, rep_index, shared, identity_projection)
    out = {name: np.asarray(fn(batch), dtype=float) for name, fn in statistics.items()}
    fp = _fingerprint(batch) if digest else 0
    return out, fp


def _fingerprint(batch):
    # XOR of per-repetition hashes: independent of chunking and order
    acc = 0
    for r, row in zip(batch.rep_index, batch.x):
        h = hashlib.blake2b(row.tobytes(), digest_size=16, salt=int(r).to_bytes(16, "little"))
        acc ^= int.from_bytes(h.digest(), "little")
    return acc


def collect_statistics(
    statistics,
    scenario,
    root,
    reps,
    shared=True,
    chunk=DEFAULT_CHUNK,
    workers=1,
    identity_projection=False,
    digest=False,
):
    """Evaluate each ``statistics[name](batch)`` on ``reps`` repetitions.

    All statistics see the same simulated batches.  Returns a dict of
    ``(reps,)`` arrays and, when ``digest`` is set, a fingerprint of the
    simulated data that does not depend on chunking.
    """
    starts = range(0, reps, chunk)
    jobs = [
        (statistics, scenario, root, np.arange(s, min(s + chunk, reps)), shared, identity_projection, digest)
        for s in starts
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_chunk, jobs))
    else:
        results = [_run_chunk(job) for job in jobs]
    merged = {
        name: np.concatenate([r[0][name] for r in results]) if results else np.empty(0)
        for name in statistics
    }
    if not digest:
        return merged
    acc = 0
    for _, fp in results:
        acc ^= fp
    return merged, f"{acc:032x}"
