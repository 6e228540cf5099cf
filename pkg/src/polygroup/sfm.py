"""Submodular function minimization through the side-constrained LP.

A general submodular psi is first reduced: every element whose removal
from the full set raises the value (d_i < 0) can never appear in a
minimizer and is dropped; the rest are kept with demand d_i =
psi(E minus i) - psi(E) >= 0, and f(A) = psi(A) + d(A) - psi(0) is a
normalized increasing submodular function on the kept elements. The
minimum of psi is then located by n small LPs: for each kept i,
maximize x_i over {x in P(f'), x >= d} with a lowered baseline f' (so
the demands are strictly interior); the first group of the optimal
structure is the best minimizer containing i. Comparing those candidate
values with psi(0) and shrinking the winner to its unique minimal
minimizer gives the exact argmin under the (cardinality, mask)
tie-break.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .errors import ElementNotKept, NotSubmodular
from .grouping import solve_max_side
from .rat import ONE, ZERO, vec_sum
from .setfn import (
    PolymatroidInstance,
    SetFunctionOracle,
    full_mask,
    iter_elements,
    mask_of,
    shifted_sfm,
    subset_str,
)


@dataclass(frozen=True)
class SfmInstance:
    """A submodular function to minimize; psi need not be normalized or
    increasing. lower_bound, when given, asserts psi(A) >= -lower_bound."""

    psi: SetFunctionOracle
    lower_bound: Optional[Fraction] = None


@dataclass(frozen=True)
class SfmReduction:
    """Demands, kept elements, and the polymatroid translation of psi.

    f satisfies f(A) - d(A) = psi(A) - psi(0) for every A inside keep,
    with f(0) = 0, f increasing and submodular."""

    d: tuple
    keep_mask: int
    f: SetFunctionOracle
    psi0: Fraction
    psi: SetFunctionOracle

    @property
    def keep(self) -> tuple:
        return tuple(iter_elements(self.keep_mask))


@dataclass
class SfmStats:
    psi_evals: int = 0
    solver_oracle_calls: int = 0
    lp_solves: int = 0
    lp_pivots: int = 0
    moves: int = 0
    subproblems: int = 0


@dataclass(frozen=True)
class SfmResult:
    argmin: int
    value: Fraction
    candidates: tuple  # (element, candidate mask, psi value) per kept element
    stats: SfmStats


def _submodular_witness_exhaustive(psi: SetFunctionOracle):
    n = psi.n
    vals = [psi.eval(m) for m in range(1 << n)]
    for a in range(1 << n):
        for i in range(n):
            if (a >> i) & 1:
                continue
            ai = a | (1 << i)
            for j in range(i + 1, n):
                if (a >> j) & 1:
                    continue
                aj = a | (1 << j)
                if vals[ai] + vals[aj] < vals[ai | aj] + vals[a]:
                    return ai, aj
    return None


def _submodular_witness_sampled(psi: SetFunctionOracle, samples: int, seed: int):
    n = psi.n
    rng = random.Random(f"sfm-validate:{seed}:{n}")
    for _ in range(samples):
        a = rng.getrandbits(n)
        free = [i for i in range(n) if not (a >> i) & 1]
        if len(free) < 2:
            continue
        i, j = rng.sample(free, 2)
        ai, aj = a | (1 << i), a | (1 << j)
        if psi.eval(ai) + psi.eval(aj) < psi.eval(ai | aj) + psi.eval(a):
            return ai, aj
    return None


def reduce(inst: SfmInstance, validate: str = "auto") -> SfmReduction:
    """Compute demands from 2n+1 evaluations, drop elements that cannot
    appear in a minimizer, and build the polymatroid translation.

    validate: 'auto' (exhaustive for explicit tables with n <= 10, else
    sampled), 'exhaustive', 'sample', or 'off'."""
    psi = inst.psi
    n = psi.n
    if validate == "auto":
        validate = (
            "exhaustive" if psi.kind == "explicit" and n <= 10 else "sample"
        )
    if validate == "exhaustive":
        w = _submodular_witness_exhaustive(psi)
    elif validate == "sample":
        w = _submodular_witness_sampled(psi, samples=128, seed=0)
    elif validate == "off":
        w = None
    else:
        raise ValueError(f"unknown validation mode {validate!r}")
    if w is not None:
        raise NotSubmodular(
            f"exchange inequality fails at {subset_str(w[0])}, {subset_str(w[1])}",
            witness=w,
        )

    full = full_mask(n)
    psi_full = psi.eval(full)
    psi0 = psi.eval(0)
    d = []
    keep_mask = 0
    for i in range(n):
        di = psi.eval(full & ~(1 << i)) - psi_full
        d.append(di)
        if di >= 0:
            keep_mask |= 1 << i
    f = shifted_sfm(psi, d, psi0, keep_mask)
    return SfmReduction(d=tuple(d), keep_mask=keep_mask, f=f, psi0=psi0, psi=psi)


class _DenseRelabel(SetFunctionOracle):
    """Presents a sparse kept subset as a dense ground set 0..k-1."""

    def __init__(self, base: SetFunctionOracle, elements: Sequence[int]):
        self.elements = tuple(elements)

        def value(mask: int) -> Fraction:
            sparse = 0
            for pos, e in enumerate(self.elements):
                if (mask >> pos) & 1:
                    sparse |= 1 << e
            return base.eval(sparse)

        super().__init__(len(self.elements), "relabeled", {"base": base}, value)


def minimize(inst: SfmInstance) -> SfmResult:
    """Exact global minimum of psi with argmin tie-broken toward the
    smallest cardinality, then the smallest bitmask (this is the unique
    minimal minimizer)."""
    psi = inst.psi
    evals_before = psi.eval_count
    red = reduce(inst)
    stats = SfmStats()
    keep = red.keep
    k = len(keep)

    candidates = []
    best_mask, best_val, best_card = 0, red.psi0, 0
    if k:
        # lowered baseline: strictly interior demands for every subproblem
        slack = vec_sum(red.d[e] for e in keep) + ONE
        floor = red.psi0 - slack
        f_low = shifted_sfm(red.psi, red.d, floor, red.keep_mask)
        dense = _DenseRelabel(f_low, keep)
        dvec = tuple(red.d[e] for e in keep)
        for pos, i in enumerate(keep):
            c = tuple(ONE if p == pos else ZERO for p in range(k))
            sub = PolymatroidInstance(f=dense, c=c, d=dvec)
            sol, cert, gs, gstats = solve_max_side(sub)
            stats.subproblems += 1
            stats.solver_oracle_calls += gstats.oracle_calls
            stats.lp_solves += gstats.lp_solves
            stats.lp_pivots += gstats.lp_pivots
            stats.moves += gstats.moves
            g1 = gs.groups[0]
            assert g1.lead == pos, "subproblem element did not lead the first group"
            cand_mask = mask_of(keep[p] for p in iter_elements(g1.mask))
            value = psi.eval(cand_mask)
            candidates.append((i, cand_mask, value))
            card = cand_mask.bit_count()
            if value < best_val or (
                value == best_val and (card, cand_mask) < (best_card, best_mask)
            ):
                best_mask, best_val, best_card = cand_mask, value, card

    # shrink to the minimal minimizer: minimizers are closed under
    # intersection, so the smallest one lives inside any winner
    if best_mask and best_mask.bit_count() <= 18:
        for sub_mask in range(1, 1 << best_mask.bit_count()):
            cand = _spread(sub_mask, best_mask)
            if psi.eval(cand) == best_val:
                card = cand.bit_count()
                if (card, cand) < (best_card, best_mask):
                    best_mask, best_card = cand, card
    stats.psi_evals = psi.eval_count - evals_before
    return SfmResult(
        argmin=best_mask, value=best_val, candidates=tuple(candidates), stats=stats
    )


def _spread(sub_mask: int, within: int) -> int:
    """Map a dense submask onto the set bits of `within`."""
    out = 0
    pos = 0
    for e in iter_elements(within):
        if (sub_mask >> pos) & 1:
            out |= 1 << e
        pos += 1
    return out


def evaluate_candidates(red: SfmReduction, candidates) -> list:
    """psi-values of candidate subsets, sorted by (value, cardinality,
    mask). Candidates inside keep are priced through the reduction
    identity psi(A) = f(A) - d(A) + psi(0); others fall back to a direct
    evaluation. Raises ElementNotKept when a candidate leaves the ground
    set entirely."""
    ground = full_mask(red.psi.n)
    out = []
    for cand in candidates:
        if cand & ~ground:
            raise ElementNotKept(
                f"candidate {subset_str(cand)} leaves the ground set "
                f"(stray bits {subset_str(cand & ~ground)})"
            )
        if cand == 0:
            out.append((cand, red.psi0))
        elif cand & ~red.keep_mask:
            out.append((cand, red.psi.eval(cand)))
        else:
            value = (
                red.f.eval(cand)
                - vec_sum(red.d[e] for e in iter_elements(cand))
                + red.psi0
            )
            out.append((cand, value))
    out.sort(key=lambda t: (t[1], t[0].bit_count(), t[0]))
    return out
