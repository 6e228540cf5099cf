"""Exact rational helpers.

All numeric state in this package is fractions.Fraction. Floats are
rejected at the boundary so rounding error can never sneak in.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Sequence

Rat = Fraction

ZERO = Fraction(0)
ONE = Fraction(1)


def as_rat(value) -> Fraction:
    """Coerce ints, Fractions, and 'p/q' / decimal strings to Fraction.

    Floats are refused: the caller must spell the exact value.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, bool):
        raise TypeError("bool is not a rational value")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        return Fraction(value.strip())
    if isinstance(value, float):
        raise TypeError(
            f"refusing float {value!r}: pass an int, Fraction, or 'p/q' string"
        )
    raise TypeError(f"cannot interpret {type(value).__name__} as a rational")


def rat_vector(values: Iterable) -> tuple[Fraction, ...]:
    return tuple(as_rat(v) for v in values)


def fmt(value: Fraction) -> str:
    """Render a Fraction as 'p' or 'p/q' (no floats)."""
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def fmt_vector(values: Sequence[Fraction]) -> str:
    return "(" + ", ".join(fmt(v) for v in values) + ")"


def dot(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    total = ZERO
    for x, y in zip(a, b):
        total += x * y
    return total


def vec_sum(values: Iterable[Fraction]) -> Fraction:
    total = ZERO
    for v in values:
        total += v
    return total
