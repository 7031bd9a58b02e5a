"""Finite-bit binary approximations of real numbers.

A ``B``-bit codeword is one sign bit, ``k + 1`` integer digits
``a_k ... a_0`` and ``F = B - k - 2`` fractional digits, where ``k`` is the
largest integer with ``2**k - 1 <= |x|`` (``k = 0`` for ``|x| < 1``).  Of the
two codewords bracketing ``|x|`` (truncation and truncation plus one unit in
the last fractional place) the closer one is kept, so the error never
exceeds the truncation tail and in particular ``2**-(B - k - 2)``.
"""

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

__all__ = [
    "InsufficientBitsError",
    "BinaryApproximation",
    "integer_digits",
    "min_bits",
    "binary_expand",
    "binary_expand_array",
    "error_bound",
    "bits_for_accuracy",
    "bits_for_accuracy_array",
    "bits_upper_bound",
]


class InsufficientBitsError(ValueError):
    pass


def integer_digits(x):
    """``k``: the largest integer ``k >= 0`` with ``2**k - 1 <= |x|``."""
    ax = abs(x)
    if ax < 1:
        return 0
    # floor(log2(|x| + 1)) computed exactly on the integer part
    return (int(math.floor(ax)) + 1).bit_length() - 1


def min_bits(x):
    return integer_digits(x) + 2


@dataclass(frozen=True)
class BinaryApproximation:
    """Reconstructed value plus its digits.

    ``int_digits`` runs from ``a_k`` down to ``a_0`` and ``frac_digits``
    from ``b_1`` onward.
    """

    value: float
    bits_used: int
    sign: int
    int_digits: tuple
    frac_digits: tuple

    def reconstruct(self):
        whole = sum(2 ** i * a for i, a in enumerate(reversed(self.int_digits)))
        frac = sum(Fraction(b, 2 ** (i + 1)) for i, b in enumerate(self.frac_digits))
        return self.sign * (whole + frac)


def binary_expand(x, B):
    """Closest ``B``-bit codeword to ``x``.

    Raises
    ------
    InsufficientBitsError
        If ``B < k + 2``, i.e. too few bits for the sign and integer part.
    """
    if not math.isfinite(x):
        raise ValueError("x must be finite")
    k = integer_digits(x)
    if B < k + 2:
        raise InsufficientBitsError(f"{B} bits cannot hold |x| = {abs(x)!r}; need at least {k + 2}")
    frac_bits = B - k - 2
    ax = Fraction(abs(x))
    scale = 2 ** frac_bits
    low = math.floor(ax * scale)
    code = low + 1 if (ax * scale - low) > Fraction(1, 2) else low
    sign = -1 if x < 0 else 1
    int_part, frac_part = divmod(code, scale)
    int_digits = tuple(int(c) for c in format(int_part, f"0{k + 1}b"))
    frac_digits = tuple(int(c) for c in format(frac_part, f"0{frac_bits}b")) if frac_bits else ()
    value = float(sign * Fraction(code, scale))
    return BinaryApproximation(value, B, sign, int_digits, frac_digits)


def binary_expand_array(x, B):
    """Vectorized reconstruction values of :func:`binary_expand`.

    ``B`` broadcasts against ``x``.  Exact in double precision while
    ``|x| * 2**F`` stays below ``2**53``.
    """
    x = np.asarray(x, dtype=float)
    B = np.asarray(B)
    ax = np.abs(x)
    k = _integer_digits_array(ax)
    if np.any(B < k + 2):
        raise InsufficientBitsError("B below k + 2 for some inputs")
    frac_bits = (B - k - 2).astype(int)
    scaled = np.ldexp(ax, frac_bits)
    low = np.floor(scaled)
    code = np.where(scaled - low > 0.5, low + 1.0, low)
    return np.copysign(np.ldexp(code, -frac_bits), x)


def _integer_digits_array(ax):
    k = np.zeros(ax.shape, dtype=int)
    big = ax >= 1
    if np.any(big):
        _, e = np.frexp(np.floor(ax[big]) + 1.0)
        k[big] = e - 1
    return k


def error_bound(x, B):
    """``2**-(B - k - 2)``, the worst-case error for ``B`` bits."""
    k = integer_digits(x) if np.ndim(x) == 0 else _integer_digits_array(np.abs(np.asarray(x, dtype=float)))
    return np.ldexp(1.0, -(np.asarray(B) - k - 2)) if np.ndim(x) else 2.0 ** -(B - k - 2)


def bits_for_accuracy(x, eps):
    """Smallest ``B`` whose codeword is within ``eps`` of ``x``."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    B = min_bits(x)
    while abs(Fraction(x) - Fraction(binary_expand(x, B).value)) > Fraction(eps):
        B += 1
    return B


def bits_for_accuracy_array(x, eps, max_extra=64):
    """Vectorized :func:`bits_for_accuracy`."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    x = np.asarray(x, dtype=float)
    B = _integer_digits_array(np.abs(x)) + 2
    todo = np.ones(x.shape, dtype=bool)
    for _ in range(max_extra):
        err = np.abs(x - binary_expand_array(x, B))
        todo = err > eps
        if not todo.any():
            return B
        B = B + todo
    raise RuntimeError("bits_for_accuracy_array did not converge")


def bits_upper_bound(x, eps):
    """``max(log2|x|, 0) + 1 + log2(1/eps) + 2``."""
    ax = np.abs(np.asarray(x, dtype=float))
    with np.errstate(divide="ignore"):
        lg = np.where(ax > 0, np.log2(np.where(ax > 0, ax, 1.0)), 0.0)
    out = np.maximum(lg, 0.0) + 1.0 + math.log2(1.0 / eps) + 2.0
    return float(out) if np.ndim(x) == 0 else out
