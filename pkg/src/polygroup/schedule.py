"""Randomized priority rules behind a side-constrained optimum.

A grouping solution splits the ground set into priority groups; the
optimal point restricted to one group is a point of the base polytope
of that group's contraction, hence a convex mixture of greedy vertices.
This module extracts an exact mixture with at most n terms in total
(peeling one vertex at a time inside each group, then overlaying the
per-group mixtures into full priority orders), validates conservation
tables indexed by permutation, and renders the result as a policy
description.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Optional

from .errors import (
    DimensionMismatch,
    GroundSetTooLarge,
    IncompleteTable,
    NotInBase,
    UnsupportedFamily,
)
from .grouping import GroupStructure
from .polymatroid import in_base, vertex
from .rat import ZERO, ONE, as_rat, fmt, rat_vector
from .setfn import (
    SetFunctionOracle,
    explicit_table,
    iter_elements,
    subset_str,
    validate_polymatroid,
)

_GROUP_CAP = 20  # peeling scans every subset of a group


@dataclass(frozen=True)
class PolicyDecomposition:
    """Convex mixture of priority rules reproducing a point exactly.

    terms are (weight, permutation) pairs with positive weights summing
    to one; every permutation lists the groups of `groups` in order."""

    terms: tuple
    groups: GroupStructure


@dataclass(frozen=True)
class PerformanceTable:
    """Performance vector per priority order, for every permutation."""

    n: int
    rows: dict


@dataclass(frozen=True)
class ConservationReport:
    ok: bool
    kind: str
    induced: Optional[SetFunctionOracle]
    failure: Optional[str] = None
    witness: Optional[tuple] = None


@dataclass(frozen=True)
class PolicyDescription:
    text: str
    record: dict


def _submasks(gmask: int):
    sub = gmask
    while sub:
        yield sub
        sub = (sub - 1) & gmask


def _peel_group(f: SetFunctionOracle, base_mask: int, gmask: int, y0: dict, slack0: dict):
    """Mixture of greedy vertices of g(A) = f(base + A) - f(base)
    reproducing y0 on the group's elements. Returns [(weight, order)].

    Each round orders the elements so that every residual-tight subset
    is swept before its complement (smallest tight closure first,
    then larger slack, then index); that keeps the chosen vertex on the
    residual's face, so every round retires at least one constraint and
    the loop ends within |group| rounds."""
    els = sorted(iter_elements(gmask))
    base_val = f.eval(base_mask)
    g = {0: ZERO}
    for a in _submasks(gmask):
        g[a] = f.eval(base_mask | a) - base_val
    y = dict(y0)
    w = ONE
    slack = dict(slack0)
    terms = []
    for _ in range(len(els)):
        if w == 0:
            break
        tights = [a for a in _submasks(gmask) if sum(y[k] for k in iter_elements(a)) == w * g[a]]
        closure_size = {}
        for k in els:
            cl = gmask
            for a in tights:
                if a >> k & 1:
                    cl &= a
            closure_size[k] = bin(cl).count("1")
        order = sorted(els, key=lambda k: (closure_size[k], -slack[k], k))
        v = {}
        pref = 0
        for k in order:
            v[k] = g[pref | (1 << k)] - g[pref]
            pref |= 1 << k
        lam = w
        for a in _submasks(gmask):
            if a == gmask:
                continue
            va = sum(v[k] for k in iter_elements(a))
            if va < g[a]:
                ya = sum(y[k] for k in iter_elements(a))
                lam = min(lam, (w * g[a] - ya) / (g[a] - va))
        for k in els:
            if v[k] > 0:
                lam = min(lam, y[k] / v[k])
        assert lam > 0, "vertex peeling stalled on a residual face"
        terms.append((lam, tuple(order)))
        for k in els:
            y[k] -= lam * v[k]
            slack[k] -= lam * v[k]
        w -= lam
    assert w == 0 and all(val == 0 for val in y.values()), "peeling left residual mass"
    return terms


def decompose(f: SetFunctionOracle, x, gs: GroupStructure, d=None) -> PolicyDecomposition:
    """Write x as a mixture of at most n greedy vertices, every one of
    which serves the groups of gs in their priority order.

    x must lie in B(f) and saturate every group prefix (which any
    grouping output does). When d is given, the first vertex of each
    group orders elements by descending slack x_k - d_k; later rounds
    reuse the rule on the residual."""
    x = rat_vector(x)
    n = f.n
    if len(x) != n:
        raise DimensionMismatch(f"|x|={len(x)} != n={n}")
    bad = in_base(f, x)
    if bad is not None:
        raise NotInBase(f"x violates the constraint on {subset_str(bad)}")
    for pm in gs.prefix_masks:
        got = sum((x[k] for k in iter_elements(pm)), ZERO)
        if got != f.eval(pm):
            raise NotInBase(
                f"x does not saturate the group prefix {subset_str(pm)}: "
                f"{fmt(got)} < {fmt(f.eval(pm))}"
            )
    if d is not None:
        d = [None if v is None else as_rat(v) for v in d]
        if len(d) != n:
            raise DimensionMismatch(f"|d|={len(d)} != n={n}")

    per_group = []
    prev = 0
    for grp in gs.groups:
        gmask = grp.mask
        size = bin(gmask).count("1")
        if size > _GROUP_CAP:
            raise GroundSetTooLarge(
                f"group of {size} elements; peeling scans 2^{size} subsets"
            )
        y0 = {k: x[k] for k in iter_elements(gmask)}
        slack0 = {
            k: x[k] - (d[k] if d is not None and d[k] is not None else ZERO)
            for k in iter_elements(gmask)
        }
        per_group.append(_peel_group(f, prev, gmask, y0, slack0))
        prev |= gmask

    # overlay the group staircases: walk all mixtures in lockstep and
    # cut a term at every cumulative-weight breakpoint
    idx = [0] * len(per_group)
    used = [ZERO] * len(per_group)
    terms = []
    consumed = ZERO
    while consumed < ONE:
        width = min(pg[idx[i]][0] - used[i] for i, pg in enumerate(per_group))
        pi = tuple(k for i, pg in enumerate(per_group) for k in pg[idx[i]][1])
        terms.append((width, pi))
        consumed += width
        for i, pg in enumerate(per_group):
            used[i] += width
            if used[i] == pg[idx[i]][0] and idx[i] + 1 < len(pg):
                idx[i] += 1
                used[i] = ZERO

    assert len(terms) <= max(n, 1), "mixture exceeded one term per element"
    assert sum(t[0] for t in terms) == ONE and all(t[0] > 0 for t in terms)
    recon = [ZERO] * n
    for wt, pi in terms:
        vx = vertex(f, pi).x
        for k in range(n):
            recon[k] += wt * vx[k]
    assert tuple(recon) == tuple(x), "mixture does not reproduce x"
    return PolicyDecomposition(terms=tuple(terms), groups=gs)


def _induced_function(table: PerformanceTable):
    """Prefix sums per subset, or the first inconsistency."""
    n = table.n
    perms = sorted(table.rows)
    first_seen = {0: (perms[0], ZERO)}
    values = {0: ZERO}
    for pi in perms:
        row = table.rows[pi]
        mask = 0
        acc = ZERO
        for e in pi:
            mask |= 1 << e
            acc += row[e]
            if mask in values:
                if values[mask] != acc:
                    return None, (mask, first_seen[mask][0], pi, first_seen[mask][1], acc)
            else:
                values[mask] = acc
                first_seen[mask] = (pi, acc)
    return values, None


def verify_conservation(table: PerformanceTable, kind: str) -> ConservationReport:
    """Decide whether a permutation-indexed performance table obeys the
    conservation laws: invariant total, prefix sums that depend only on
    the prefix set, and an induced set function of the right shape
    (increasing and submodular for f-type, supermodular for b-type)."""
    if kind not in ("f-type", "b-type"):
        raise UnsupportedFamily(f"unknown table kind {kind!r}")
    n = table.n
    if n > 6:
        raise GroundSetTooLarge(f"conservation check enumerates {n}! rows")
    want = set(permutations(range(n)))
    have = set(table.rows)
    if have != want:
        missing = min(want - have) if want - have else min(have - want)
        raise IncompleteTable(
            f"table has {len(have)} rows, needs all {len(want)} permutations "
            f"(first difference: {missing})"
        )
    for pi, row in table.rows.items():
        if len(row) != n:
            raise IncompleteTable(f"row {pi} has {len(row)} entries, needs {n}")

    perms = sorted(table.rows)
    ref = perms[0]
    total = sum(table.rows[ref])
    for pi in perms[1:]:
        got = sum(table.rows[pi])
        if got != total:
            return ConservationReport(
                ok=False, kind=kind, induced=None,
                failure="total-invariance", witness=(ref, pi, total, got),
            )

    values, clash = _induced_function(table)
    if clash is not None:
        return ConservationReport(
            ok=False, kind=kind, induced=None,
            failure="prefix-consistency", witness=clash,
        )

    tab = explicit_table(n, [values[m] for m in range(1 << n)])
    if kind == "f-type":
        rep = validate_polymatroid(tab, mode="exhaustive")
        if not rep.ok:
            wit = rep.witness_increasing or rep.witness_submodular or (0, 0)
            return ConservationReport(
                ok=False, kind=kind, induced=None,
                failure="function-validity", witness=wit,
            )
    else:
        vals = [values[m] for m in range(1 << n)]
        for m in range(1 << n):
            free = [i for i in range(n) if not m >> i & 1]
            for ai, i in enumerate(free):
                mi = m | 1 << i
                if vals[mi] < vals[m]:
                    return ConservationReport(
                        ok=False, kind=kind, induced=None,
                        failure="function-validity", witness=(m, mi),
                    )
                for j in free[ai + 1:]:
                    mj = m | 1 << j
                    if vals[mi] + vals[mj] > vals[mi | mj] + vals[m]:
                        return ConservationReport(
                            ok=False, kind=kind, induced=None,
                            failure="function-validity", witness=(mi, mj),
                        )
    return ConservationReport(ok=True, kind=kind, induced=tab)


def describe_policy(dec: PolicyDecomposition, gs: GroupStructure, x=None, d=None) -> PolicyDescription:
    """Plain-language and machine-readable account of a decomposition:
    the strict priority order over groups, the randomization inside
    each group, and which elements sit pinned at their bounds."""
    group_sets = [sorted(iter_elements(g.mask)) for g in gs.groups]
    pinned = sorted(k for g in gs.groups for k in g.nonleads)

    # project the mixture back onto each group for its local lottery
    local: list = [{} for _ in gs.groups]
    for wt, pi in dec.terms:
        for i, g in enumerate(gs.groups):
            sub = tuple(k for k in pi if (g.mask >> k) & 1)
            local[i][sub] = local[i].get(sub, ZERO) + wt

    lines = []
    if len(gs.groups) > 1:
        lines.append(
            "priority order: "
            + " > ".join("{" + ",".join(map(str, s)) + "}" for s in group_sets)
        )
    for i, g in enumerate(gs.groups):
        lottery = sorted(local[i].items())
        name = "{" + ",".join(map(str, group_sets[i])) + "}"
        if len(lottery) == 1:
            lines.append(f"group {name}: serve in order {lottery[0][0]}")
        else:
            draws = ", ".join(f"{pi} w.p. {fmt(wt)}" for pi, wt in lottery)
            lines.append(f"group {name}: randomize {draws}")
    for k in pinned:
        if d is not None and d[k] is not None:
            lines.append(f"element {k} held at its bound ({fmt(as_rat(d[k]))})")
        elif x is not None:
            lines.append(f"element {k} held at its bound ({fmt(as_rat(x[k]))})")
        else:
            lines.append(f"element {k} held at its bound")
    if not pinned:
        lines.append("no element is pinned; the rule is plain priority service")
    lines.append(
        "the same expectations are also reachable with one dynamic "
        "priority discipline in place of the lottery; only the mixture "
        "form is computed here"
    )

    record = {
        "group_order": [list(s) for s in group_sets],
        "leads": [g.lead for g in gs.groups],
        "pinned": list(pinned),
        "terms": [
            {"weight": fmt(wt), "pi": list(pi)} for wt, pi in dec.terms
        ],
    }
    return PolicyDescription(text="\n".join(lines), record=record)
