"""Deterministic, splittable random streams.

A stream is identified by a root seed and a path of labels.  The pair is
hashed into a 128-bit Philox key, so every stream is an independent
counter-based sequence and deriving a child never consumes randomness from
the parent.  Monte Carlo repetitions derive their streams from the root by
repetition index, which makes results independent of how repetitions are
scheduled across workers.
"""

import hashlib
import struct

import numpy as np

__all__ = [
    "RandomStream",
    "derive_stream",
    "sample_gaussian_vector",
    "sample_haar_orthogonal",
    "haar_from_gaussian",
    "sample_rademacher",
    "batch_draw",
]

_SEED_MASK = (1 << 64) - 1


def _stream_key(seed, path):
    h = hashlib.blake2b(digest_size=16, person=b"metameans-rng")
    h.update(struct.pack("<Q", seed))
    for label in path:
        raw = label.encode("utf-8")
        # length prefix keeps the encoding injective
        h.update(struct.pack("<I", len(raw)))
        h.update(raw)
    digest = h.digest()
    return int.from_bytes(digest[:8], "little"), int.from_bytes(digest[8:], "little")


class RandomStream:
    """A labelled random stream.

    Parameters
    ----------
    seed : int
        Root seed, an unsigned 64-bit integer.
    path : tuple of str
        Labels leading from the root to this stream.
    """

    __slots__ = ("seed", "path", "_gen")

    def __init__(self, seed, path=()):
        seed = int(seed)
        if not 0 <= seed <= _SEED_MASK:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self.path = tuple(path)
        self._gen = None

    def __repr__(self):
        return f"RandomStream(seed={self.seed}, path={'/'.join(self.path) or '<root>'})"

    def __eq__(self, other):
        return isinstance(other, RandomStream) and (self.seed, self.path) == (other.seed, other.path)

    def __hash__(self):
        return hash((self.seed, self.path))

    def __getstate__(self):
        return {"seed": self.seed, "path": self.path}

    def __setstate__(self, state):
        self.seed = state["seed"]
        self.path = state["path"]
        self._gen = None

    @property
    def key(self):
        return _stream_key(self.seed, self.path)

    def derive(self, label):
        label = str(label)
        if not label:
            raise ValueError("stream label must be nonempty")
        return RandomStream(self.seed, self.path + (label,))

    @property
    def generator(self):
        """The underlying numpy Generator, created on first use."""
        if self._gen is None:
            self._gen = np.random.Generator(np.random.Philox(key=np.array(self.key, dtype=np.uint64)))
        return self._gen

    def fresh(self):
        """A copy of this stream rewound to its first draw."""
        return RandomStream(self.seed, self.path)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def uniform(self, size=None):
        return self.generator.random(size)

    def rademacher(self, size=None):
        return self.generator.integers(0, 2, size=size, dtype=np.int8).astype(float) * 2.0 - 1.0


def derive_stream(parent, label):
    return parent.derive(label)


def sample_gaussian_vector(d, stream):
    """``d`` iid standard normals."""
    if d < 1:
        raise ValueError("dimension must be positive")
    return stream.standard_normal(d)


def sample_rademacher(stream, size=None):
    """Fair random sign(s) in {-1, +1}."""
    out = stream.rademacher(size)
    return float(out) if size is None else out


def haar_from_gaussian(g):
    """Map Gaussian square matrices to Haar orthogonal ones.

    Works on a single ``(d, d)`` matrix or a stack ``(..., d, d)``.  The QR
    factor is sign-corrected so that the triangular factor has a positive
    diagonal; without that correction the result is not Haar distributed.
    """
    q, r = np.linalg.qr(g)
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.0
    return q * signs[..., None, :]


def sample_haar_orthogonal(d, stream):
    """A ``d x d`` orthogonal matrix drawn from the Haar measure."""
    if d < 1:
        raise ValueError("dimension must be positive")
    return haar_from_gaussian(stream.standard_normal((d, d)))


class _Rebinder:
    """Reuses one Philox instance by resetting its key; equivalent to fresh streams."""

    def __init__(self):
        self.bitgen = np.random.Philox(key=0)
        self.gen = np.random.Generator(self.bitgen)
        self.template = self.bitgen.state

    def bind(self, stream):
        state = self.template
        state["state"]["key"] = np.array(stream.key, dtype=np.uint64)
        state["state"]["counter"] = np.zeros(4, dtype=np.uint64)
        state["buffer"] = np.zeros(4, dtype=np.uint64)
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self.bitgen.state = state
        return self.gen


def batch_draw(streams, draw):
    """Apply ``draw(generator)`` to each stream from its first draw and stack.

    Equivalent to ``np.stack([draw(s.fresh().generator) for s in streams])``
    but several times faster for many short streams.
    """
    rebinder = _Rebinder()
    return np.stack([draw(rebinder.bind(s)) for s in streams])
