"""Polymatroid primitives: greedy vertices, the unconstrained greedy LP,
membership checks, and the supermodular-to-submodular base transform."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .errors import GroundSetTooLarge
from .rat import ZERO, dot, rat_vector
from .setfn import SetFunctionOracle, full_mask, subset_str


@dataclass(frozen=True)
class Vertex:
    x: tuple
    pi: tuple


def vertex(f: SetFunctionOracle, pi: Sequence[int]) -> Vertex:
    """Telescoped vertex of B(f) for permutation pi."""
    n = f.n
    order = tuple(pi)
    if sorted(order) != list(range(n)):
        raise ValueError(f"pi must be a permutation of 0..{n - 1}")
    x = [ZERO] * n
    prev = ZERO
    mask = 0
    for e in order:
        mask |= 1 << e
        cur = f.eval(mask)
        x[e] = cur - prev
        prev = cur
    return Vertex(tuple(x), order)


def cost_order(c: Sequence[Fraction]) -> tuple:
    """Descending cost, ties by ascending index; the solver's slot order."""
    return tuple(sorted(range(len(c)), key=lambda i: (-c[i], i)))


def greedy_lp(f: SetFunctionOracle, c) -> tuple:
    """max c.x over P(f) for c >= 0: returns (x, objective)."""
    c = rat_vector(c)
    if len(c) != f.n:
        raise ValueError(f"|c|={len(c)} != n={f.n}")
    if any(v < 0 for v in c):
        raise ValueError("greedy LP needs c >= 0")
    v = vertex(f, cost_order(c))
    # zero-cost coordinates contribute nothing; the vertex value is still
    # the canonical output (a point of B(f))
    return v.x, dot(c, v.x)


@dataclass
class MembershipReport:
    member: bool
    witness_mask: Optional[int] = None
    demand: Optional[Fraction] = None
    capacity: Optional[Fraction] = None

    def __str__(self):
        if self.member:
            return "member"
        return (
            f"not a member: d({subset_str(self.witness_mask)}) = {self.demand}"
            f" > f = {self.capacity}"
        )


def membership(f: SetFunctionOracle, d) -> MembershipReport:
    """Exhaustive test of d in P(f); n <= 20 only."""
    d = rat_vector(d)
    n = f.n
    if n > 20:
        raise GroundSetTooLarge(f"exhaustive membership for n={n} > 20")
    if len(d) != n:
        raise ValueError(f"|d|={len(d)} != n={n}")
    dsum = [ZERO] * (1 << n)
    for mask in range(1, 1 << n):
        low = mask & -mask
        dsum[mask] = dsum[mask ^ low] + d[low.bit_length() - 1]
        cap = f.eval(mask)
        if dsum[mask] > cap:
            return MembershipReport(False, mask, dsum[mask], cap)
    return MembershipReport(True)


def b_to_f(b: SetFunctionOracle) -> SetFunctionOracle:
    """f(A) = b(E) - b(E\\A); B(f) = B(b) for supermodular increasing b."""
    fm = full_mask(b.n)
    top = b.eval(fm)

    def value(mask: int) -> Fraction:
        return top - b.eval(fm ^ mask)

    return SetFunctionOracle(b.n, "b-to-f", {"b": b}, value)


def in_base(f: SetFunctionOracle, x, exhaustive_limit: int = 20) -> Optional[int]:
    """Returns a violated subset mask when x is not in B(f), else None.

    Checks x(A) <= f(A) for all A and x(E) = f(E); exhaustive, so meant
    for small ground sets (tests, decomposition preconditions).
    """
    x = rat_vector(x)
    n = f.n
    if n > exhaustive_limit:
        raise GroundSetTooLarge(f"exhaustive base check for n={n} > {exhaustive_limit}")
    xsum = [ZERO] * (1 << n)
    for mask in range(1, 1 << n):
        low = mask & -mask
        xsum[mask] = xsum[mask ^ low] + x[low.bit_length() - 1]
        if xsum[mask] > f.eval(mask):
            return mask
    if xsum[full_mask(n)] != f.eval(full_mask(n)):
        return full_mask(n)
    return None
