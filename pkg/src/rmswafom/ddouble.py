"""Vectorised double-double arithmetic on numpy arrays.

A double-double value is a pair ``(hi, lo)`` of float64 arrays with
``|lo| <= ulp(hi)/2``; it carries about 106 significant bits.  Only the few
error-free transformations needed by the figure-of-merit kernels are here.
"""

from __future__ import annotations

from fractions import Fraction

_SPLITTER = 134217729.0  # 2**27 + 1


def two_sum(a, b):
    s = a + b
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    return s, err


def quick_two_sum(a, b):
    s = a + b
    err = b - (s - a)
    return s, err


def _split(a):
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def two_prod(a, b):
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    err = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, err


def add(a_hi, a_lo, b_hi, b_lo):
    s, e = two_sum(a_hi, b_hi)
    t, f = two_sum(a_lo, b_lo)
    e = e + t
    s, e = quick_two_sum(s, e)
    e = e + f
    return quick_two_sum(s, e)


def mul(a_hi, a_lo, b_hi, b_lo):
    p, e = two_prod(a_hi, b_hi)
    e = e + (a_hi * b_lo + a_lo * b_hi)
    return quick_two_sum(p, e)


def excess_combine(p_hi, p_lo, q_hi, q_lo):
    """(1 + p)(1 + q) - 1 = p + q + p*q, never forming 1 + p."""
    pq_hi, pq_lo = mul(p_hi, p_lo, q_hi, q_lo)
    t_hi, t_lo = add(p_hi, p_lo, q_hi, q_lo)
    return add(t_hi, t_lo, pq_hi, pq_lo)


def from_fraction(x: Fraction) -> tuple[float, float]:
    hi = float(x)
    lo = float(x - Fraction(hi))
    return hi, lo


def to_fraction(hi, lo) -> Fraction:
    return Fraction(float(hi)) + Fraction(float(lo))

