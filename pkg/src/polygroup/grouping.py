"""Exact linear optimization over a polymatroid with elementwise lower
bounds, and the mirrored minimization over a supermodular base with
elementwise upper bounds.

The solver maintains an ordered partition of the ground set into
groups. Each group has exactly one lead element; every other member is
pinned at its bound, and the lead absorbs the rest of the group's tight
span, so x(G^(1) u ... u G^(i)) equals the oracle value of that prefix
for every i. Members of a group are organized into ordered subgroups
that remember entry order; a subgroup is accepted only after a small LP
over the group's contraction certifies that pinning all of its members
at their bounds stays inside the contracted polytope.

Elements are inserted one at a time in priority order (cost descending,
ties by index), always at the current formation frontier: the deepest
prefix whose marginal still covers the element's bound. Every commit
re-checks the formation inequalities it depends on against the live
structure, so a finished structure certifies itself regardless of the
path that produced it. An insertion that lands inside an existing group
can displace structure: subgroups behind the insertion point are
revalidated in place and dissolved only if their certificates fail,
members that outgrow their group are re-placed further down the chain,
and groups behind a modified group are rebuilt. Arrangements that were
already tried once are not recreated. Incremental repair can stall when
marginals tie their bounds exactly; small instances then fall back to
an exhaustive saturation rebuild that recovers the same tight-set chain
by direct subset scan, while larger ones stop with a budget error. Any
structure satisfying the output invariants yields the same (optimal)
value, so repairs affect only the search path, never the answer; the
dual certificate returned with the solution proves optimality
independently of how the structure was found.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Optional

from .errors import (
    BudgetExceeded,
    DimensionMismatch,
    InfeasibleSideConstraints,
    NotAPolymatroid,
)
from .lpcore import LinearProgram
from .lpcore import solve as lp_solve
from .polymatroid import cost_order
from .rat import ZERO, as_rat, dot, fmt, rat_vector
from .setfn import (
    PolymatroidInstance,
    SetFunctionOracle,
    full_mask,
    iter_elements,
    mask_of,
    subset_str,
)

MAXF = "max-f"
MINB = "min-b"

# largest ground set the exhaustive saturation rebuild will scan; the
# rebuild enumerates every subset, so this caps its cost at a couple of
# hundred thousand oracle values
_SAT_CAP = 17

TraceFn = Callable[[dict], None]


@dataclass(frozen=True)
class Subgroup:
    """Ordered bundle of pinned members; entry order is significant."""

    members: tuple[int, ...]

    @property
    def mask(self) -> int:
        return mask_of(self.members)


@dataclass(frozen=True)
class Group:
    lead: int
    subgroups: tuple[Subgroup, ...]

    @property
    def nonleads(self) -> tuple[int, ...]:
        out = []
        for sg in self.subgroups:
            out.extend(sg.members)
        return tuple(out)

    @property
    def mask(self) -> int:
        m = 1 << self.lead
        for sg in self.subgroups:
            m |= sg.mask
        return m


@dataclass(frozen=True)
class GroupStructure:
    """Ordered groups partitioning the ground set; prefix_masks[i] is
    the union of groups 1..i+1 (so the last entry is the full set)."""

    groups: tuple[Group, ...]
    prefix_masks: tuple[int, ...]

    def group_of(self, element: int) -> int:
        for i, g in enumerate(self.groups):
            if (g.mask >> element) & 1:
                return i
        raise KeyError(element)


@dataclass(frozen=True)
class PrimalSolution:
    x: tuple[Fraction, ...]
    objective: Fraction


@dataclass(frozen=True)
class DualCertificate:
    """y maps chain-set masks to multipliers, z maps pinned elements to
    their side-constraint multipliers; all omitted entries are zero."""

    y: dict
    z: dict


@dataclass
class Stats:
    oracle_calls: int = 0
    lp_solves: int = 0
    lp_pivots: int = 0
    moves: int = 0
    groups: int = 0
    subgroups: int = 0


@dataclass(frozen=True)
class CertificateReport:
    passed: bool
    failures: tuple
    primal_objective: Optional[Fraction]
    dual_objective: Optional[Fraction]


class _MGroup:
    __slots__ = ("lead", "subs")

    def __init__(self, lead: int):
        self.lead = lead
        self.subs: list[list[int]] = []

    def mask(self) -> int:
        m = 1 << self.lead
        for s in self.subs:
            for k in s:
                m |= 1 << k
        return m


class _Engine:
    def __init__(self, f: SetFunctionOracle, c, d, sense: str, trace: Optional[TraceFn]):
        self.f = f
        self.n = f.n
        self.c = rat_vector(c)
        if len(self.c) != self.n:
            raise DimensionMismatch(f"c has {len(self.c)} entries, ground set is {self.n}")
        if len(d) != self.n:
            raise DimensionMismatch(f"d has {len(d)} entries, ground set is {self.n}")
        self.d = list(d)  # Fraction, or None for an absent upper bound
        self.sense = sense
        self.trace = trace
        self.stats = Stats()
        self.cache: dict[int, Fraction] = {}
        self.order = cost_order(self.c)
        self.slot = {e: s for s, e in enumerate(self.order)}
        self.groups: list[_MGroup] = []
        self.pending: list = []  # heap of (slot, element)
        self.budget = 0
        # routing mode: normally an element whose marginal exactly meets
        # its bound keeps moving (it could still lead a later group);
        # when that policy cycles, the retry pass stops such elements at
        # the first exact fit instead
        self.tie_stop = False
        # elements pinned by the anchor escape: they sit as singleton
        # subgroups that may strictly clear their surroundings, so the
        # blocking facts are not required of them; entry and validation
        # still are, which is all feasibility needs
        self.anchored: set = set()
        # every (element, structure, pending) state seen at top-level
        # placement within the current insertion; the engine is
        # deterministic, so an exact repeat proves an endless loop
        self.seen_states: set = set()
        # arrangements already tried within one group rebuild: fresh
        # subgroups and dissolved blockers, keyed by (element, prefix,
        # group content); reset per rebuild because later rebuilds may
        # legitimately recreate an old arrangement
        self.tried_single: set = set()
        self.tried_dissolve: set = set()
        # elements set aside after exhausting every move: margins at a
        # group's top shrink as later elements join it, so a refusal
        # now is not a refusal forever; each retry must be preceded by
        # at least one real commit or the postponement is hopeless
        self.deferred: list = []
        self.defer_seen: dict = {}
        self.commit_serial = 0

    # ------------------------------------------------------------------
    # oracle access

    def val(self, mask: int) -> Fraction:
        v = self.cache.get(mask)
        if v is None:
            v = self.f.eval(mask)
            self.cache[mask] = v
            self.stats.oracle_calls += 1
        return v

    def marg(self, e: int, mask: int) -> Fraction:
        m = self.val(mask | (1 << e)) - self.val(mask)
        if m < 0:
            raise NotAPolymatroid(
                f"marginal of element {e} at {subset_str(mask)} is {fmt(m)} < 0",
                witness=(mask, mask | (1 << e)),
            )
        return m

    def fits(self, e: int, mask: int) -> bool:
        de = self.d[e]
        if de is None:
            return True
        m = self.marg(e, mask)
        return m >= de if self.sense == MAXF else m <= de

    def fits_strict(self, e: int, mask: int) -> bool:
        """Strict version of fits; the blocking facts recorded for a
        standing structure only need the weak complement (a marginal
        that exactly meets the bound still counts as blocked)."""
        de = self.d[e]
        if de is None:
            return True
        m = self.marg(e, mask)
        return m > de if self.sense == MAXF else m < de

    def route_fits(self, e: int, mask: int) -> bool:
        """Whether e keeps moving past this prefix during placement.
        Either mode commits only fact-checked structures, so both are
        sound; they differ in which structures they can reach."""
        return self.fits_strict(e, mask) if self.tie_stop else self.fits(e, mask)

    def dsum(self, elems) -> Fraction:
        total = ZERO
        for k in elems:
            dk = self.d[k]
            assert dk is not None, "unbounded element inside a subgroup"
            total += dk
        return total

    def emit(self, **record) -> None:
        if self.trace is not None:
            self.trace(record)

    def spend(self) -> None:
        self.budget -= 1
        self.stats.moves += 1
        if self.budget < 0:
            raise BudgetExceeded(
                "placement budget exhausted; structure repair did not settle"
            )

    # ------------------------------------------------------------------
    # structure helpers

    def prefixes(self) -> list:
        """Masks of G^(0) .. G^(m)."""
        out = [0]
        for g in self.groups:
            out.append(out[-1] | g.mask())
        return out

    def _raise_infeasible(self, wmask: int) -> None:
        demand = ZERO
        for k in iter_elements(wmask):
            dk = self.d[k]
            if dk is None:
                assert self.sense == MAXF, "witness contains an unbounded element"
                continue
            demand += dk
        capacity = self.val(wmask)
        if self.sense == MAXF:
            assert demand > capacity, "infeasibility witness does not verify"
            rel = ">"
        else:
            assert demand < capacity, "infeasibility witness does not verify"
            rel = "<"
        raise InfeasibleSideConstraints(
            f"side constraints unsatisfiable: d{subset_str(wmask)} = {fmt(demand)} "
            f"{rel} {fmt(capacity)} = value of {subset_str(wmask)}",
            witness_mask=wmask,
            demand=demand,
            capacity=capacity,
        )

    # ------------------------------------------------------------------
    # main loop

    def run(self):
        try:
            self.build()
        except BudgetExceeded:
            self.tie_stop = True
            self.restart()
            try:
                self.build()
            except BudgetExceeded as exc:
                if self.n > _SAT_CAP:
                    raise BudgetExceeded(
                        f"{exc}; the exhaustive rebuild is limited to "
                        f"{_SAT_CAP} elements"
                    ) from exc
                self.saturate()
        return self.finish()

    def build(self) -> None:
        for e in self.order:
            self.budget = 200 + 100 * self.n * self.n
            self.seen_states.clear()
            self.push(e)
            self.drain()

    def restart(self) -> None:
        self.groups = []
        self.pending = []
        self.anchored.clear()
        self.seen_states.clear()
        self.tried_single.clear()
        self.tried_dissolve.clear()
        self.deferred.clear()
        self.defer_seen.clear()
        self.commit_serial = 0
        self.emit(step="retry", reason="tie elements now stop at the first exact fit")

    def push(self, e: int) -> None:
        heapq.heappush(self.pending, (self.slot[e], e))

    def drain(self) -> None:
        while self.pending or self.deferred:
            if not self.pending:
                for k in self.deferred:
                    self.push(k)
                self.deferred.clear()
            _, e = heapq.heappop(self.pending)
            self.place(e)

    def defer(self, e: int, local: list) -> bool:
        """Set e aside to retry once the rest of the queue has landed.
        Sound commits only is the rule, but a commit refused against
        today's structure can pass tomorrow: whatever joins a group
        lowers the margins over its top, which is the direction every
        failed span and entry check needs. The retry is pointless if
        nothing has committed since e last stepped aside; that repeat
        is reported as exhaustion instead."""
        if self.defer_seen.get(e) == self.commit_serial:
            return False
        self.defer_seen[e] = self.commit_serial
        while local:
            _, k = heapq.heappop(local)
            self.push(k)
        self.deferred.append(e)
        self.emit(step="defer", element=e)
        return True

    def state_key(self, e: int) -> tuple:
        structure = tuple(
            (g.lead, tuple(tuple(s) for s in g.subs)) for g in self.groups
        )
        return (e, structure, tuple(sorted(self.pending)), tuple(sorted(self.anchored)))

    def place(self, e: int) -> None:
        """Find the group that must absorb e (first prefix where its
        marginal stops covering the bound), or append it as a new lead."""
        self.spend()
        self.anchored.discard(e)
        key = self.state_key(e)
        if key in self.seen_states:
            # repeating the identical repair is pointless, but with the
            # queue reordered it may never come up: step aside first and
            # only call it a cycle when nothing else moves either
            if self.defer(e, []):
                return
            raise BudgetExceeded(
                "placement revisited an identical intermediate structure; "
                "structure repair is cycling"
            )
        self.seen_states.add(key)
        prefs = self.prefixes()
        m = len(self.groups)
        nat = m + 1
        for j in range(0, m + 1):
            # the empty prefix is probed weakly in either mode: failing
            # there means the singleton bound itself is unreachable
            ok = self.fits(e, prefs[j]) if j == 0 else self.route_fits(e, prefs[j])
            if not ok:
                nat = j
                break
        if nat == 0:
            self._raise_infeasible(1 << e)
        # a deferred element may find groups whose leads entered after
        # it; it cannot pin under those (the priority gap would flip its
        # multiplier), so it leads a new group just before the first one
        slotpos = m + 1
        for q in range(1, m + 1):
            if self.slot[self.groups[q - 1].lead] > self.slot[e]:
                slotpos = q
                break
        if nat > m and slotpos > m:
            self.emit(step="place", element=e, target="tail")
            self.groups.append(_MGroup(e))
            self.commit_serial += 1
        elif slotpos <= nat:
            self.emit(step="place", element=e, target=slotpos, lead=True)
            self.groups.insert(slotpos - 1, _MGroup(e))
            self.commit_serial += 1
            self.sweep(slotpos + 1)
        else:
            self.emit(step="place", element=e, target=nat)
            alive = self.join_group(nat, e)
            self.sweep(nat + 1 if alive else nat)

    def join_group(self, q: int, e: int) -> bool:
        """Insert e into group q (1-based). Returns False when the group
        dissolved during its lead check. Groups behind q are left in
        place; the caller re-checks them against the changed prefix."""
        self.tried_single.clear()
        self.tried_dissolve.clear()
        local: list = []
        self.place_in_group(q, e, local)
        while local:
            _, k = heapq.heappop(local)
            self.place_in_group(q, k, local)
        # an anchor escape may have dissolved groups ahead of q
        return q <= len(self.groups) and self.lead_check(q)

    def place_in_group(self, q: int, e: int, local: list) -> None:
        """Steps 2 and 3 for one element inside group q: choose the
        subgroup position whose formation inequalities hold right now,
        validate with the contraction LP, and commit. A new subgroup is
        placed only where the element clears the prefix but not the
        prefix plus the lead; joining is allowed only at the last
        position the element clears, so every member's entry inequality
        is a live fact about the final structure, not a stale one."""
        self.spend()
        grp = self.groups[q - 1]
        base = self.prefixes()[q - 1]
        leadbit = 1 << grp.lead
        prefs = [base]
        for sub in grp.subs:
            prefs.append(prefs[-1] | mask_of(sub))
        h = len(grp.subs)
        if self.route_fits(e, prefs[h] | leadbit):
            # the group thinned out under e; it belongs further down
            self.emit(step="punt", element=e, group=q)
            self.push(e)
            return
        jstar = 0
        for j in range(h + 1, 0, -1):
            if self.fits(e, prefs[j - 1]):
                jstar = j
                break
        assert jstar >= 1, "element no longer fits at its own group's base"
        jl = 0
        for j in range(jstar, 0, -1):
            if self.fits_strict(e, prefs[j - 1] | leadbit):
                jl = j
                break
        self.emit(step="subgroup-scan", element=e, group=q, jstar=jstar, floor=jl, positions=h + 1)
        gmask = grp.mask()
        if jstar <= h:
            prefix = prefs[jstar - 1]
            sub = grp.subs[jstar - 1]
            ebit = 1 << e
            cohesive = all(self.fits(k, prefix | ebit) for k in sub)
            if cohesive and jl < jstar and self.single_commit(q, e, jstar, prefix, gmask, local):
                return
            # joining is sound only when the newcomer and every occupant
            # block each other pairwise over the subgroup prefix; that
            # mutual matrix is what lets the validation LP check the full
            # set alone instead of every subset
            mutual = all(not self.fits_strict(k, prefix | ebit) for k in sub) and all(
                not self.fits_strict(e, prefix | (1 << k)) for k in sub
            )
            if mutual:
                tentative = sub + [e]
                if self.validate(tentative, prefix, q, jstar, e):
                    if self.lead_precheck(q, e):
                        grp.subs[jstar - 1] = tentative
                        self.commit_serial += 1
                        self.revalidate_tail(q, jstar, local)
                        return
                elif q == 1 and jstar == 1:
                    self._raise_infeasible(mask_of(tentative))
        for p in range(jstar, jl, -1):
            if self.single_commit(q, e, p, prefs[p - 1], gmask, local):
                return
        if jstar > h:
            if (
                self.anchor(q, e, local)
                or self.absorb(q, e, local)
                or self.pull(q, e, local)
                or self.defer(e, local)
            ):
                return
            raise BudgetExceeded(
                "placement options exhausted; structure repair revisited "
                "a failed arrangement"
            )
        # e cannot sit anywhere, so the subgroup whose window it breaks
        # gives way: dissolve that one subgroup and re-place its members
        key = (e, prefs[jstar - 1], gmask)
        if key in self.tried_dissolve:
            if (
                self.anchor(q, e, local)
                or self.absorb(q, e, local)
                or self.pull(q, e, local)
                or self.defer(e, local)
            ):
                return
            raise BudgetExceeded(
                "placement options exhausted; structure repair revisited "
                "a failed arrangement"
            )
        self.tried_dissolve.add(key)
        moved = grp.subs[jstar - 1]
        del grp.subs[jstar - 1]
        for k in moved:
            heapq.heappush(local, (self.slot[k], k))
        heapq.heappush(local, (self.slot[e], e))
        self.emit(step="dissolve", group=q, position=jstar, elements=sorted(moved + [e]))
        self.revalidate_tail(q, jstar - 1, local)

    def single_commit(self, q: int, e: int, p: int, prefix: int, gmask: int, local: list) -> bool:
        """Try to commit e as a fresh one-element subgroup at position
        p. Skipped if this exact arrangement was already tried once."""
        key = (e, prefix, gmask)
        if key in self.tried_single:
            return False
        self.tried_single.add(key)
        if not self.lead_precheck(q, e):
            return False
        ok = self.validate([e], prefix, q, p, e)
        assert ok, "fresh singleton subgroup failed validation"
        grp = self.groups[q - 1]
        grp.subs.insert(p - 1, [e])
        self.commit_serial += 1
        self.revalidate_tail(q, p, local)
        return True

    def lead_bound_ok(self, x_lead: Fraction, lead: int) -> bool:
        dl = self.d[lead]
        if self.sense == MAXF:
            return x_lead >= (dl if dl is not None else ZERO)
        return x_lead >= ZERO and (dl is None or x_lead <= dl)

    def lead_precheck(self, q: int, extra: int) -> bool:
        """Whether group q's lead can still cover its own bound with
        element extra pinned alongside the current members. Checked
        before committing, so arrangements the lead cannot afford are
        refused instead of committed and immediately torn down."""
        grp = self.groups[q - 1]
        base = self.prefixes()[q - 1]
        nonleads = [k for s in grp.subs for k in s]
        x_lead = (
            self.val(base | grp.mask() | (1 << extra))
            - self.val(base)
            - self.dsum(nonleads + [extra])
        )
        if not self.lead_bound_ok(x_lead, grp.lead):
            return False
        return self.group_feas(base, grp.mask() | (1 << extra), nonleads + [extra])

    def anchor(self, q: int, e: int, local: list) -> bool:
        """Move group q's pinned conflict set into an earlier group as
        one transaction. Repair inside group q can exhaust its
        arrangements even when the instance is fine: bounds can overrun
        what q's base leaves them jointly while one group earlier they
        all fit. Single-element moves cannot escape this, because a
        halfway state pins one bound where its margin still strictly
        clears and the lead check rightly rejects that; the whole set
        has to land together. Each moved element becomes a one-element
        subgroup; entry, contraction, lead bound and the span check are
        all verified on the combined result before anything commits.
        Nearest group first keeps the disturbance small."""
        grp = self.groups[q - 1]
        batch = [k for s in grp.subs for k in s] + [e]
        if any(self.d[k] is None for k in batch):
            return False
        batch.sort(key=lambda k: self.slot[k])
        bmask = mask_of(batch)
        for q2 in range(q - 1, 0, -1):
            grp2 = self.groups[q2 - 1]
            if any(self.slot[grp2.lead] > self.slot[k] for k in batch):
                # pinning under a lower-priority lead would flip the
                # sign of a pinned element's multiplier
                continue
            base2 = self.prefixes()[q2 - 1]
            nonleads = [k for s in grp2.subs for k in s]
            gmask2 = grp2.mask() | bmask
            x_lead = self.val(base2 | gmask2) - self.val(base2) - self.dsum(nonleads + batch)
            if not self.lead_bound_ok(x_lead, grp2.lead):
                continue
            self.anchored.update(batch)
            if not self.group_feas(base2, gmask2, nonleads + batch):
                self.anchored.difference_update(batch)
                continue
            grp.subs = []
            for k in batch:
                grp2.subs.append([k])
            self.commit_serial += 1
            self.emit(step="anchor", elements=list(batch), group=q2, source=q)
            while local:
                _, k = heapq.heappop(local)
                self.push(k)
            self.sweep(q2 + 1)
            return True
        return False

    def absorb(self, q: int, e: int, local: list) -> bool:
        """Grow group q forward until it can afford e. An element can be
        refused by every group because each top is too small: its margin
        over each of them still strictly clears its bound, so pinning it
        would overdraw the lead. Swallowing the successor group lowers
        the margins over the merged top, which is the direction every
        failed check needs. A swallowed lead pins at its own bound as a
        one-element subgroup; the subgroups it brought keep their exact
        prefixes, so their facts carry over verbatim. e lands at the end
        as soon as the merged group covers the joint demand."""
        if self.d[e] is None or self.slot[self.groups[q - 1].lead] > self.slot[e]:
            return False
        saved = [(g.lead, [list(s) for s in g.subs]) for g in self.groups]
        saved_anch = set(self.anchored)
        grp = self.groups[q - 1]
        base = self.prefixes()[q - 1]
        self.anchored.add(e)
        while q < len(self.groups):
            nxt = self.groups[q]
            if self.d[nxt.lead] is None:
                break
            grp.subs.append([nxt.lead])
            grp.subs.extend(nxt.subs)
            self.anchored.add(nxt.lead)
            del self.groups[q]
            nonleads = [k for s in grp.subs for k in s]
            if len(nonleads) + 1 > 14:
                break
            gmask = grp.mask() | (1 << e)
            x_lead = self.val(base | gmask) - self.val(base) - self.dsum(nonleads + [e])
            if not self.lead_bound_ok(x_lead, grp.lead):
                continue
            if not self.group_feas(base, gmask, nonleads + [e]):
                continue
            grp.subs.append([e])
            self.commit_serial += 1
            self.emit(step="absorb", element=e, group=q, merged=len(saved) - len(self.groups))
            while local:
                _, k = heapq.heappop(local)
                self.push(k)
            self.sweep(q + 1)
            return True
        self.groups = [_MGroup(lead) for lead, _ in saved]
        for g, (_, subs) in zip(self.groups, saved):
            g.subs = subs
        self.anchored.clear()
        self.anchored.update(saved_anch)
        return False

    def rescue(self, q: int, e: int, local: list) -> bool:
        """Re-base the stuck element on an earlier boundary. Placement
        follows priority order, but the set an element must share a
        group with does not: a bound with a very late priority can
        belong deep inside an early group, and a boundary committed
        before it arrived walls that group off at the wrong place.
        Working backward from the natural stop, fold the intervening
        groups into one (their leads pin at their own bounds, their
        subgroup prefixes are unchanged so the facts carry), optionally
        draft one still-loose element whose bound belongs inside, and
        land e at the end. Each variant commits under the full group
        feasibility scan or not at all."""
        if self.d[e] is None:
            return False
        placed = 0
        for g in self.groups:
            placed |= g.mask()
        prefs = self.prefixes()
        loose = [
            k
            for k in self.order
            if k != e and not (placed >> k) & 1 and self.d[k] is not None
        ]
        loose.sort(key=lambda k: -self.slot[k])
        for q0 in range(q, 0, -1):
            grp0 = self.groups[q0 - 1]
            if self.slot[grp0.lead] > self.slot[e]:
                break
            base = prefs[q0 - 1]
            if not self.fits(e, base):
                break
            pins = []
            blocked = False
            for j in range(q0 + 1, q + 1):
                gj = self.groups[j - 1]
                if self.d[gj.lead] is None:
                    blocked = True
                    break
                pins.append(gj.lead)
                pins.extend(k for s in gj.subs for k in s)
            if blocked:
                break
            own = [k for s in grp0.subs for k in s]
            for w in [None] + loose:
                batch = pins + ([w] if w is not None else []) + [e]
                nonleads = own + batch
                if len(nonleads) > 14:
                    continue
                gmask = grp0.mask() | mask_of(batch)
                x_lead = self.val(base | gmask) - self.val(base) - self.dsum(nonleads)
                if not self.lead_bound_ok(x_lead, grp0.lead):
                    continue
                added = set(batch) - self.anchored
                self.anchored.update(added)
                if not self.group_feas(base, gmask, nonleads):
                    self.anchored.difference_update(added)
                    continue
                for j in range(q0 + 1, q + 1):
                    gj = self.groups[j - 1]
                    grp0.subs.append([gj.lead])
                    grp0.subs.extend(gj.subs)
                del self.groups[q0:q]
                if w is not None:
                    grp0.subs.append([w])
                grp0.subs.append([e])
                self.commit_serial += 1
                self.emit(
                    step="rescue", element=e, group=q0, merged=q - q0, drafted=w
                )
                while local:
                    _, k = heapq.heappop(local)
                    self.push(k)
                self.sweep(q0 + 1)
                return True
        return False

    def validate(self, members: list, prefix: int, group: int, position: int, element: int) -> bool:
        """The contraction membership check for one subgroup, reduced to
        an LP whose only constraints are the pinned bounds and the full
        subgroup set; unboundedness of its dual flags an invalid
        subgroup."""
        ell = len(members)
        smask = mask_of(members)
        g_full = self.val(prefix | smask) - self.val(prefix)
        dvals = [self.d[k] for k in members]
        assert all(v is not None for v in dvals)
        if self.sense == MAXF:
            obj = [-g_full] + dvals
            rows = []
            for t in range(1, ell + 1):
                coeffs = [ZERO] * (ell + 1)
                coeffs[0] = Fraction(-1)
                coeffs[t] = Fraction(1)
                rows.append((coeffs, "=", Fraction(1) if t == 1 else ZERO))
        else:
            obj = [g_full] + [-v for v in dvals]
            rows = []
            for t in range(1, ell + 1):
                coeffs = [ZERO] * (ell + 1)
                coeffs[0] = Fraction(1)
                coeffs[t] = Fraction(-1)
                rows.append((coeffs, "=", Fraction(1) if t == 1 else ZERO))
        out = lp_solve(LinearProgram("max", obj, rows=rows))
        self.stats.lp_solves += 1
        self.stats.lp_pivots += out.pivots
        assert out.status in ("optimal", "unbounded")
        bounded = out.status == "optimal"
        self.emit(
            step="validate",
            group=group,
            position=position,
            element=element,
            prefix_mask=prefix,
            members=list(members),
            bounded=bounded,
            pivots=out.pivots,
        )
        return bounded

    def subgroup_facts(self, sub: list, prefix: int, lead: int, q: int, position: int) -> bool:
        """Re-derive every inequality a standing subgroup rests on, with
        members in their original entry order: each member clears the
        subgroup prefix, no member after the first strictly clears the
        prefix plus the members before it, the first does not strictly
        clear the prefix plus the lead, members block each other pairwise
        over the prefix, and the pinned vector stays inside the
        contraction. The pairwise matrix is what reduces that last check
        to the full subgroup set; the entry chain is what lets the lead
        cover insertions ahead of the whole group."""
        if len(sub) == 1 and sub[0] in self.anchored:
            # an anchored pin carries no entry or blocking facts at its
            # own position; it needs room over the group base, and the
            # group feasibility scan run with every lead check covers
            # the subsets it shares with the other members
            return self.fits(sub[0], self.prefixes()[q - 1])
        if not all(self.fits(k, prefix) for k in sub):
            return False
        if self.fits_strict(sub[0], prefix | (1 << lead)):
            return False
        acc = prefix | (1 << sub[0])
        for k in sub[1:]:
            if self.fits_strict(k, acc):
                return False
            acc |= 1 << k
        if len(sub) > 1:
            for a in sub:
                for b in sub:
                    if a != b and self.fits_strict(a, prefix | (1 << b)):
                        return False
        return self.validate(sub, prefix, q, position, sub[0])

    def revalidate_tail(self, q: int, start: int, local: list) -> None:
        """Subgroups behind an insertion or removal see a changed
        prefix, so their certificates are stale. Re-check each one in
        place; failures dissolve that one subgroup while the rest keep
        their positions."""
        grp = self.groups[q - 1]
        prefix = self.prefixes()[q - 1]
        for sub in grp.subs[:start]:
            prefix |= mask_of(sub)
        idx = start
        while idx < len(grp.subs):
            sub = grp.subs[idx]
            if self.subgroup_facts(sub, prefix, grp.lead, q, idx + 1):
                prefix |= mask_of(sub)
                idx += 1
                continue
            del grp.subs[idx]
            for k in sub:
                heapq.heappush(local, (self.slot[k], k))
            self.emit(step="revalidate", group=q, position=idx + 1, elements=sorted(sub))

    def sweep(self, start: int) -> None:
        """Groups behind a changed prefix keep their shape only if every
        inequality they rest on still holds; stale subgroups dissolve and
        their members re-enter placement."""
        j = start
        while j <= len(self.groups):
            grp = self.groups[j - 1]
            prefix = self.prefixes()[j - 1]
            idx = 0
            while idx < len(grp.subs):
                sub = grp.subs[idx]
                if self.subgroup_facts(sub, prefix, grp.lead, j, idx + 1):
                    prefix |= mask_of(sub)
                    idx += 1
                    continue
                del grp.subs[idx]
                for k in sub:
                    self.push(k)
                self.emit(step="revalidate", group=j, position=idx + 1, elements=sorted(sub))
            if self.lead_check(j):
                j += 1

    def group_feas(self, base: int, gmask: int, nonleads: list) -> bool:
        """Group feasibility for member subsets an anchored pin is part
        of. A normally placed member certifies its subsets through entry
        order and blocking: margins telescope from the subgroup prefixes
        down to the group base on the demand side and below the bounds
        on the span side. An anchored pin carries none of that, so every
        member subset containing one is checked directly, on both sides:
        the subset's pinned total must fit over the group base (demand)
        and must cover what the group top loses without it (span)."""
        anch = [k for k in nonleads if k in self.anchored]
        if not anch:
            return True
        if len(nonleads) > 14:
            return False
        top = base | gmask
        top_val = self.val(top)
        base_val = self.val(base)
        rest = [k for k in nonleads if k not in self.anchored]
        for pick in range(1, 1 << len(anch)):
            cmask0 = 0
            for i in range(len(anch)):
                if (pick >> i) & 1:
                    cmask0 |= 1 << anch[i]
            for sub in range(1 << len(rest)):
                cmask = cmask0
                for i in range(len(rest)):
                    if (sub >> i) & 1:
                        cmask |= 1 << rest[i]
                lost = top_val - self.val(top & ~cmask)
                room = self.val(base | cmask) - base_val
                dsum = self.dsum(list(iter_elements(cmask)))
                if self.sense == MAXF:
                    bad = lost > dsum or room < dsum
                else:
                    bad = lost < dsum or room > dsum
                if bad:
                    return False
        return True

    def lead_check(self, q: int) -> bool:
        """The group's lead absorbs the tight span left over by its
        pinned members. If that leftover violates the lead's own bound,
        either the instance is infeasible (front group, bound overrun)
        or the members are expelled; a lead that cannot stand alone
        dissolves the group and re-enters placement. Returns False when
        the group dissolved."""
        grp = self.groups[q - 1]
        base = self.prefixes()[q - 1]
        gmask = grp.mask()
        nonleads = [k for s in grp.subs for k in s]
        x_lead = self.val(base | gmask) - self.val(base) - self.dsum(nonleads)
        dl = self.d[grp.lead]
        if self.sense == MAXF:
            ok = x_lead >= (dl if dl is not None else ZERO)
        else:
            ok = x_lead >= ZERO and (dl is None or x_lead <= dl)
        spanned = not ok or self.group_feas(base, gmask, nonleads)
        self.emit(
            step="lead-check",
            group=q,
            lead=grp.lead,
            value=fmt(x_lead),
            bound=(None if dl is None else fmt(dl)),
            ok=ok and spanned,
        )
        if ok and spanned:
            return True
        # the demand side overran: a genuine witness if this is the
        # front group, otherwise the members must sit further forward;
        # a failed span check only indicts the arrangement, never the
        # instance
        if self.sense == MAXF:
            overrun = ok is False
        else:
            overrun = dl is not None and x_lead > dl
        if overrun and q == 1 and nonleads:
            wmask = gmask
            if self.sense == MAXF and dl is None:
                wmask = gmask & ~(1 << grp.lead)
            self._raise_infeasible(wmask)
        if nonleads:
            grp.subs = []
            for k in nonleads:
                self.emit(step="expel", element=k, group=q)
                self.push(k)
            if self.fits(grp.lead, base):
                return True
        # the lead alone cannot cover its own bound here; the whole
        # group gives way and the lead re-enters placement
        del self.groups[q - 1]
        self.emit(step="group-dissolve", group=q, lead=grp.lead)
        self.push(grp.lead)
        return False

    # ------------------------------------------------------------------
    # exhaustive fallback

    def saturate(self) -> None:
        """Rebuild the whole structure by exhaustive scan. Incremental
        repair can stop making progress when marginals tie their bounds
        exactly, because every local move looks as good as the last one;
        those instances are handled here instead. Elements are processed
        in priority order and each receives the extreme value compatible
        with every subset constraint, with bound room reserved for the
        elements still waiting. The scan is exact over all subsets, so
        the result is the lexicographically extreme optimum; its tight
        sets then yield the prefix chain, each new tight layer led by
        the first element that forced it."""
        n = self.n
        N = 1 << n
        self.emit(step="fallback", reason="structure repair did not settle")
        self.groups = []
        self.pending = []
        self.anchored.clear()
        self.deferred.clear()
        d0 = [v if v is not None else ZERO for v in self.d]
        # a mask holding an element with no upper bound imposes no
        # requirement until that element is placed: it can absorb any
        # amount, so the constraint is always satisfiable later
        waiting = 0
        if self.sense == MINB:
            for k, v in enumerate(self.d):
                if v is None:
                    waiting |= 1 << k
        val = [ZERO] * N
        for mask in range(1, N):
            val[mask] = self.val(mask)
        dsum = [ZERO] * N
        for mask in range(1, N):
            low = mask & -mask
            dsum[mask] = dsum[mask ^ low] + d0[low.bit_length() - 1]
        for mask in range(1, N):
            if mask & waiting:
                continue
            bad = dsum[mask] > val[mask] if self.sense == MAXF else dsum[mask] < val[mask]
            if bad:
                self._raise_infeasible(mask)
        xv: list = [None] * n
        xsum = [ZERO] * N
        rsum = dsum[:]  # bound room reserved by elements not yet placed
        for e in self.order:
            ebit = 1 << e
            de = d0[e]
            for mask in range(N):
                if mask & ebit:
                    rsum[mask] -= de
            others = waiting & ~ebit
            best = None
            for mask in range(1, N):
                if not mask & ebit or mask & others:
                    continue
                cand = val[mask] - xsum[mask] - rsum[mask]
                if best is None or (cand < best if self.sense == MAXF else cand > best):
                    best = cand
            if self.sense == MAXF:
                assert best >= de, "saturation broke a lower bound on a feasible instance"
            else:
                if best < 0:
                    best = ZERO
                assert self.d[e] is None or best <= de, (
                    "saturation broke an upper bound on a feasible instance"
                )
            waiting &= ~ebit
            xv[e] = best
            for mask in range(N):
                if mask & ebit:
                    xsum[mask] += best
            self.emit(step="saturate", element=e, value=fmt(best))
        for mask in range(1, N):
            ok = xsum[mask] <= val[mask] if self.sense == MAXF else xsum[mask] >= val[mask]
            assert ok, "saturation left the feasible region"
        tight = [m for m in range(1, N) if xsum[m] == val[m]]
        full = N - 1
        prev = 0
        prefmask = 0
        for e in self.order:
            ebit = 1 << e
            prefmask |= ebit
            if prev & ebit:
                assert xv[e] == d0[e], "pinned element drifted from its bound"
                continue
            cl = full
            for m in tight:
                if m & prefmask == prefmask:
                    cl &= m
            assert cl & prefmask == prefmask and xsum[cl] == val[cl], "priority prefix has no tight closure"
            grp = _MGroup(e)
            for k in sorted(iter_elements(cl & ~prev & ~ebit), key=lambda k: self.slot[k]):
                if self.d[k] is None:
                    raise BudgetExceeded(
                        "the exhaustive rebuild pinned an element with no "
                        "upper bound inside a tight layer; that layer has "
                        "no bound to charge in the certificate"
                    )
                grp.subs.append([k])
            self.groups.append(grp)
            prev = cl
        assert prev == full, "tight chain does not cover the ground set"

    # ------------------------------------------------------------------
    # output construction

    def finish(self):
        m = len(self.groups)
        x: list = [None] * self.n
        prefs = self.prefixes()
        leads = []
        for i, grp in enumerate(self.groups, start=1):
            nonleads = [k for s in grp.subs for k in s]
            for k in nonleads:
                x[k] = self.d[k]
            x_lead = self.val(prefs[i]) - self.val(prefs[i - 1]) - self.dsum(nonleads)
            x[grp.lead] = x_lead
            leads.append(grp.lead)
            dl = self.d[grp.lead]
            if dl is not None:
                assert (x_lead >= dl) if self.sense == MAXF else (x_lead <= dl)
            assert x_lead >= 0
            for k in nonleads:
                assert self.slot[grp.lead] < self.slot[k], "lead is not the group's highest-priority element"
        for a, b in zip(leads, leads[1:]):
            assert self.slot[a] < self.slot[b], "leads out of priority order"
        assert all(v is not None for v in x)
        objective = dot(self.c, x)

        groups = tuple(
            Group(lead=g.lead, subgroups=tuple(Subgroup(tuple(s)) for s in g.subs))
            for g in self.groups
        )
        gs = GroupStructure(groups=groups, prefix_masks=tuple(prefs[1:]))
        sol = PrimalSolution(x=tuple(x), objective=objective)

        y: dict = {}
        z: dict = {}
        for j in range(1, m + 1):
            cl = self.c[leads[j - 1]]
            cnext = self.c[leads[j]] if j < m else ZERO
            y[prefs[j]] = cl - cnext
            assert y[prefs[j]] >= 0
        for i, grp in enumerate(self.groups, start=1):
            cl = self.c[grp.lead]
            for s in grp.subs:
                for k in s:
                    z[k] = cl - self.c[k]
                    assert z[k] >= 0
        cert = DualCertificate(y=y, z=z)

        # exact duality at every element, and equal objectives
        for e2 in range(self.n):
            cover = sum((yv for msk, yv in y.items() if (msk >> e2) & 1), ZERO)
            assert cover - z.get(e2, ZERO) == self.c[e2], "dual equality failed"
        dual_obj = sum((yv * self.val(msk) for msk, yv in y.items()), ZERO) - sum(
            (zv * self.d[k] for k, zv in z.items()), ZERO
        )
        assert dual_obj == objective, "dual objective mismatch"

        self.stats.groups = m
        self.stats.subgroups = sum(len(g.subs) for g in self.groups)
        return sol, cert, gs, self.stats


def solve_max_side(inst: PolymatroidInstance, trace: Optional[TraceFn] = None):
    """Maximize c.x over {x(A) <= f(A) for all A, x >= d}.

    Returns (PrimalSolution, DualCertificate, GroupStructure, Stats).
    Raises InfeasibleSideConstraints with a verified witness subset when
    no point of the polytope dominates d."""
    eng = _Engine(inst.f, inst.c, inst.d, MAXF, trace)
    return eng.run()


def solve_min_side(b: SetFunctionOracle, c, d, trace: Optional[TraceFn] = None):
    """Minimize c.x over {x(A) >= b(A) for all A, x(E) = b(E), x <= d}
    for a normalized increasing supermodular b; d entries may be None
    for elements with no upper bound.

    Returns the same tuple shape as solve_max_side."""
    c = rat_vector(c)
    dd = []
    for i, v in enumerate(d):
        if v is None:
            dd.append(None)
            continue
        v = as_rat(v)
        if v < 0:
            raise InfeasibleSideConstraints(
                f"upper bound of element {i} is negative",
                witness_mask=1 << i,
                demand=v,
                capacity=b.eval(1 << i),
            )
        dd.append(v)
    eng = _Engine(b, c, dd, MINB, trace)
    return eng.run()


# ---------------------------------------------------------------------------
# certificate checking


def _run_checks(f: SetFunctionOracle, c, d, sol, cert, gs, sense: str) -> CertificateReport:
    failures = []
    n = f.n
    c = rat_vector(c)
    x = sol.x

    def fail(name: str, detail: str) -> None:
        failures.append(f"{name}: {detail}")

    if len(x) != n or len(c) != n or len(d) != n:
        fail("dimensions", "vector lengths disagree with the ground set")
        return CertificateReport(False, tuple(failures), None, None)

    seen = 0
    for g in gs.groups:
        gm = g.mask
        if gm & seen:
            fail("structure", "groups overlap")
        seen |= gm
        for sg in g.subgroups:
            if (sg.mask >> g.lead) & 1:
                fail("structure", f"lead {g.lead} appears in a subgroup")
    if seen != full_mask(n):
        fail("structure", "groups do not cover the ground set")
    pref = 0
    for i, g in enumerate(gs.groups):
        pref |= g.mask
        if i >= len(gs.prefix_masks) or gs.prefix_masks[i] != pref:
            fail("structure", f"cached prefix mask {i + 1} is wrong")
            break

    order = cost_order(c)
    slot = {e: s for s, e in enumerate(order)}
    leads = [g.lead for g in gs.groups]
    for a, b2 in zip(leads, leads[1:]):
        if slot[a] >= slot[b2]:
            fail("priority-order", f"lead {b2} outranks earlier lead {a}")
    for g in gs.groups:
        for k in g.nonleads:
            if slot[g.lead] >= slot[k]:
                fail("priority-order", f"member {k} outranks its lead {g.lead}")

    for i in range(n):
        di = d[i]
        if di is None:
            continue
        bad = x[i] < di if sense == MAXF else x[i] > di
        if bad:
            fail("side-constraints", f"x[{i}] = {fmt(x[i])} violates bound {fmt(di)}")
    if sense == MINB and any(v < 0 for v in x):
        fail("side-constraints", "negative coordinate")

    for pm in gs.prefix_masks:
        xa = sum((x[e] for e in iter_elements(pm)), ZERO)
        if xa != f.eval(pm):
            fail("chain-tightness", f"x{subset_str(pm)} = {fmt(xa)} != {fmt(f.eval(pm))}")

    if n <= 12:
        for mask in range(1, 1 << n):
            xa = sum((x[e] for e in iter_elements(mask)), ZERO)
            fa = f.eval(mask)
            bad = xa > fa if sense == MAXF else xa < fa
            if bad:
                fail("subset-feasibility", f"x{subset_str(mask)} = {fmt(xa)} vs {fmt(fa)}")
                break

    for msk, yv in cert.y.items():
        if yv < 0:
            fail("dual-nonnegativity", f"y[{subset_str(msk)}] = {fmt(yv)} < 0")
    for k, zv in cert.z.items():
        if zv < 0:
            fail("dual-nonnegativity", f"z[{k}] = {fmt(zv)} < 0")
    chain = set(gs.prefix_masks)
    for msk in cert.y:
        if msk not in chain:
            fail("dual-support", f"y carries non-chain set {subset_str(msk)}")
    nonlead_all = set()
    for g in gs.groups:
        nonlead_all.update(g.nonleads)
    for k in cert.z:
        if k not in nonlead_all:
            fail("dual-support", f"z carries non-pinned element {k}")

    for e in range(n):
        cover = sum((yv for msk, yv in cert.y.items() if (msk >> e) & 1), ZERO)
        if cover - cert.z.get(e, ZERO) != c[e]:
            fail("dual-equality", f"element {e}: {fmt(cover - cert.z.get(e, ZERO))} != {fmt(c[e])}")

    dual_obj = sum((yv * f.eval(msk) for msk, yv in cert.y.items()), ZERO)
    for k, zv in cert.z.items():
        dk = d[k]
        if dk is None:
            fail("dual-support", f"z[{k}] set but element {k} has no bound")
            continue
        dual_obj -= zv * dk
    primal_obj = dot(c, x)
    if primal_obj != sol.objective:
        fail("objective-equality", f"stored objective {fmt(sol.objective)} != c.x {fmt(primal_obj)}")
    if dual_obj != primal_obj:
        fail("objective-equality", f"dual {fmt(dual_obj)} != primal {fmt(primal_obj)}")

    return CertificateReport(
        passed=not failures,
        failures=tuple(failures),
        primal_objective=primal_obj,
        dual_objective=dual_obj,
    )


def check_certificate(inst: PolymatroidInstance, sol: PrimalSolution, cert: DualCertificate, gs: GroupStructure) -> CertificateReport:
    """Verify a maximization solve end to end: structure sanity,
    priority order, side constraints, chain tightness, exhaustive subset
    feasibility for n <= 12, dual sign/support/equality conditions, and
    exact primal = dual objective."""
    return _run_checks(inst.f, inst.c, inst.d, sol, cert, gs, MAXF)


def check_certificate_min(b: SetFunctionOracle, c, d, sol: PrimalSolution, cert: DualCertificate, gs: GroupStructure) -> CertificateReport:
    """Mirror of check_certificate for the minimization sense (x(A) >=
    b(A), x <= d)."""
    return _run_checks(b, c, tuple(d), sol, cert, gs, MINB)
