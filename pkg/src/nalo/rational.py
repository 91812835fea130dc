"""Small helpers for exact rational parameters and irrational thresholds."""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational

_SCALE = 10**9


def as_fraction(value) -> Fraction:
    """Parse ``value`` ("p/q", int, Fraction, decimal string) into a Fraction.

    Floats are rejected: every parameter must be exact.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    raise TypeError(f"expected an exact rational, got {type(value).__name__}")


def fraction_str(q: Fraction) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def iroot(x: int, k: int) -> int:
    """Floor of the k-th root of a nonnegative integer."""
    if x < 0 or k < 1:
        raise ValueError("iroot needs x >= 0 and k >= 1")
    if x < 2 or k == 1:
        return x
    r = int(round(x ** (1.0 / k))) if x.bit_length() < 1000 else 1 << (x.bit_length() // k)
    # Newton from above, then fix up
    r = max(r, 1)
    while r**k > x:
        r = ((k - 1) * r + x // r ** (k - 1)) // k
    while (r + 1) ** k <= x:
        r += 1
    return r


def floor_power(n: int, e: Fraction) -> int:
    """Exact floor of n**e for integer n >= 1 and rational e >= 0."""
    e = as_fraction(e)
    if e < 0:
        raise ValueError("floor_power needs a nonnegative exponent")
    return iroot(n**e.numerator, e.denominator)


def power_bounds(n: int, e: Fraction, scale: int = _SCALE) -> tuple[Fraction, Fraction]:
    """Rational ``(lo, hi)`` with lo <= n**e <= hi; equal when n**e is rational.

    Works for negative exponents too. The bracket width is about 1/scale relative.
    """
    e = as_fraction(e)
    if n < 1:
        raise ValueError("power_bounds needs n >= 1")
    if e < 0:
        lo, hi = power_bounds(n, -e, scale)
        return Fraction(1) / hi, Fraction(1) / lo
    p, q = e.numerator, e.denominator
    base = n**p
    r = iroot(base, q)
    if r**q == base:
        return Fraction(r), Fraction(r)
    # bracket by scaling: floor((base * scale**q)**(1/q)) / scale
    s = iroot(base * scale**q, q)
    return Fraction(s, scale), Fraction(s + 1, scale)


def sqrt_float(q: Fraction) -> float:
    """Square root at the reporting boundary; exact inputs stay exact upstream."""
    return math.sqrt(q.numerator) / math.sqrt(q.denominator) if q else 0.0


def rational_sqrt(q: Fraction) -> Fraction | None:
    """Exact square root if ``q`` is a perfect rational square, else None."""
    q = Fraction(q)
    if q < 0:
        return None
    a, b = iroot(q.numerator, 2), iroot(q.denominator, 2)
    if a * a == q.numerator and b * b == q.denominator:
        return Fraction(a, b)
    return None
