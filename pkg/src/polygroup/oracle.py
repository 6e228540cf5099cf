"""Independent brute-force references.

These deliberately share nothing with the structured solvers beyond the
set-function oracles and the LP core: the LP reference materializes the
exponential constraint system verbatim, the minimizer scans every
subset, and the flow reference runs plain augmenting paths. Tests and
the CLI's --check mode certify the fast paths against these.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .errors import BudgetExceeded, InfeasibleSideConstraints, MalformedGraph
from .lpcore import LinearProgram
from .lpcore import solve as lp_solve
from .rat import ZERO, as_rat, fmt
from .setfn import PolymatroidInstance, SetFunctionOracle, iter_elements, subset_str


@dataclass(frozen=True)
class OracleBudget:
    """Hard caps applied before any allocation happens."""

    max_subsets: int = 1 << 20
    max_lp_rows: int = 5000


DEFAULT_BUDGET = OracleBudget()


def brute_lp(inst: PolymatroidInstance, budget: OracleBudget = DEFAULT_BUDGET):
    """Maximize c.x over {x(A) <= f(A) for all nonempty A, x >= d} by
    materializing every subset row. Returns (x, objective); raises
    InfeasibleSideConstraints (witness found by direct enumeration) when
    the system admits no point."""
    n = inst.n
    nrows = (1 << n) - 1 + n
    if nrows > budget.max_lp_rows:
        raise BudgetExceeded(
            f"brute LP needs {nrows} rows, budget allows {budget.max_lp_rows}"
        )
    f = inst.f
    rows = []
    for mask in range(1, 1 << n):
        coeffs = [Fraction(1) if (mask >> j) & 1 else ZERO for j in range(n)]
        rows.append((coeffs, "<=", f.eval(mask)))
    lp = LinearProgram("max", list(inst.c), rows=rows, lb=list(inst.d))
    out = lp_solve(lp)
    if out.status == "infeasible":
        wmask, demand, capacity = _find_violated_subset(f, inst.d, sense_max=True)
        raise InfeasibleSideConstraints(
            f"no feasible point: d{subset_str(wmask)} = {fmt(demand)} > "
            f"{fmt(capacity)} = f{subset_str(wmask)}",
            witness_mask=wmask,
            demand=demand,
            capacity=capacity,
        )
    assert out.status == "optimal", "bounded polytope cannot be unbounded"
    return out.x, out.value


def brute_lp_min(b: SetFunctionOracle, c, d, budget: OracleBudget = DEFAULT_BUDGET):
    """Mirror reference: minimize c.x over {x(A) >= b(A) for all A,
    x(E) = b(E), x <= d}; d entries may be None for unbounded
    coordinates. Returns (x, objective)."""
    n = b.n
    nrows = (1 << n) - 1
    if nrows > budget.max_lp_rows:
        raise BudgetExceeded(
            f"brute LP needs {nrows} rows, budget allows {budget.max_lp_rows}"
        )
    full = (1 << n) - 1
    rows = []
    for mask in range(1, 1 << n):
        coeffs = [Fraction(1) if (mask >> j) & 1 else ZERO for j in range(n)]
        rows.append((coeffs, "=" if mask == full else ">=", b.eval(mask)))
    dd = [None if v is None else as_rat(v) for v in d]
    lp = LinearProgram("min", list(c), rows=rows, ub=dd)
    out = lp_solve(lp)
    if out.status == "infeasible":
        wmask, demand, capacity = _find_violated_subset(b, dd, sense_max=False)
        raise InfeasibleSideConstraints(
            f"no feasible point: d{subset_str(wmask)} = {fmt(demand)} < "
            f"{fmt(capacity)} = b{subset_str(wmask)}",
            witness_mask=wmask,
            demand=demand,
            capacity=capacity,
        )
    assert out.status == "optimal"
    return out.x, out.value


def _find_violated_subset(f: SetFunctionOracle, d, sense_max: bool):
    for mask in range(1, 1 << f.n):
        total = ZERO
        unbounded = False
        for e in iter_elements(mask):
            if d[e] is None:
                unbounded = True
                break
            total += d[e]
        if unbounded:
            continue
        cap = f.eval(mask)
        if (sense_max and total > cap) or (not sense_max and total < cap):
            return mask, total, cap
    raise AssertionError("LP infeasible but no violated subset exists")


def brute_sfm(psi: SetFunctionOracle, budget: OracleBudget = DEFAULT_BUDGET):
    """Exact minimum of psi over all subsets (empty set included).
    Ties broken by smaller cardinality, then smaller bitmask. Returns
    (argmin_mask, value)."""
    n = psi.n
    if (1 << n) > budget.max_subsets:
        raise BudgetExceeded(
            f"brute minimization needs {1 << n} evaluations, budget allows "
            f"{budget.max_subsets}"
        )
    best_mask = 0
    best_val = psi.eval(0)
    best_card = 0
    for mask in range(1, 1 << n):
        v = psi.eval(mask)
        card = mask.bit_count()
        if v < best_val or (
            v == best_val and (card, mask) < (best_card, best_mask)
        ):
            best_mask, best_val, best_card = mask, v, card
    return best_mask, best_val


def max_flow_min_cut(edges, s, t) -> Fraction:
    """Exact max-flow value from s to t over directed capacitated edges
    given as (u, v, capacity) triples, via shortest augmenting paths.
    Equals the minimum s-t cut capacity."""
    if s == t:
        raise MalformedGraph("source and sink coincide")
    cap: dict = {}
    adj: dict = {}
    nodes = {s, t}
    for u, v, c in edges:
        c = as_rat(c)
        if c < 0:
            raise MalformedGraph(f"negative capacity on edge {u!r}->{v!r}")
        nodes.add(u)
        nodes.add(v)
        if u == v:
            continue
        cap[(u, v)] = cap.get((u, v), ZERO) + c
        cap.setdefault((v, u), ZERO)
        adj.setdefault(u, set()).add(v)
        adj.setdefault(v, set()).add(u)
    flow = ZERO
    while True:
        parent = {s: None}
        queue = deque([s])
        while queue:
            u = queue.popleft()
            if u == t:
                break
            for v in adj.get(u, ()):
                if v not in parent and cap.get((u, v), ZERO) > 0:
                    parent[v] = u
                    queue.append(v)
        if t not in parent:
            return flow
        bottleneck: Optional[Fraction] = None
        v = t
        while parent[v] is not None:
            u = parent[v]
            c = cap[(u, v)]
            if bottleneck is None or c < bottleneck:
                bottleneck = c
            v = u
        v = t
        while parent[v] is not None:
            u = parent[v]
            cap[(u, v)] -= bottleneck
            cap[(v, u)] += bottleneck
            v = u
        flow += bottleneck
