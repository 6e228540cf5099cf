"""Exception types shared across the package.

Every error that callers are expected to catch carries enough structured
data to act on: witness sets are stored as bitmasks, values as Fractions.
"""

from __future__ import annotations

from fractions import Fraction


class PolygroupError(Exception):
    """Base class for all package-specific errors."""


class GroundSetTooLarge(PolygroupError):
    """Ground set exceeds the supported size (bitmask representation)."""


class DimensionMismatch(PolygroupError):
    """Vector length disagrees with the oracle's ground set size."""


class UnsupportedFamily(PolygroupError):
    """Unknown instance family or oracle kind requested."""


class NotSubmodular(PolygroupError):
    """A set function failed a submodularity (or supermodularity) check.

    Attributes:
        witness: tuple (A, B) of bitmasks violating the exchange inequality.
    """

    def __init__(self, msg: str, witness: tuple[int, int] | None = None):
        super().__init__(msg)
        self.witness = witness


class NotAPolymatroid(PolygroupError):
    """Rank-style validation failed (normalization, monotonicity, or exchange)."""

    def __init__(self, msg: str, witness: tuple[int, int] | None = None):
        super().__init__(msg)
        self.witness = witness


class InfeasibleSideConstraints(PolygroupError):
    """Lower bounds cannot be met inside the polytope.

    Attributes:
        witness_mask: bitmask W with d(W) > f(W) (resp. d(W) < b(W) for the
            minimization sense), proving infeasibility.
        demand: d(W) as a Fraction.
        capacity: f(W) as a Fraction.
    """

    def __init__(self, msg: str, witness_mask: int, demand: Fraction, capacity: Fraction):
        super().__init__(msg)
        self.witness_mask = witness_mask
        self.demand = demand
        self.capacity = capacity


class NotInBase(PolygroupError):
    """A claimed point is not in the required polytope/base."""


class ElementNotKept(PolygroupError):
    """Requested a reduced-problem solve for an element that was dropped."""


class IncompleteTable(PolygroupError):
    """An explicit value table does not cover all subsets."""


class MalformedGraph(PolygroupError):
    """Graph input for a cut function is malformed."""


class OverlapError(PolygroupError):
    """Group structure has overlapping or non-covering groups."""


class BudgetExceeded(PolygroupError):
    """An internal work budget was exhausted; indicates a solver bug, not
    a property of the instance."""
