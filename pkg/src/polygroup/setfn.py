"""Set-function oracles over bitmask subsets.

Ground sets are 0..n-1 and subsets are plain ints used as bitmasks
(bit i set <=> element i in the subset). Every oracle evaluates to a
Fraction and counts its evaluations.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .errors import (
    DimensionMismatch,
    GroundSetTooLarge,
    IncompleteTable,
    MalformedGraph,
    NotAPolymatroid,
    NotSubmodular,
    OverlapError,
    UnsupportedFamily,
)
from .rat import ZERO, Rat, as_rat, fmt, rat_vector, vec_sum

MAX_GROUND = 64


def check_ground(n: int) -> None:
    if not 1 <= n <= MAX_GROUND:
        raise GroundSetTooLarge(f"ground set size {n} outside 1..{MAX_GROUND}")


def full_mask(n: int) -> int:
    return (1 << n) - 1


def iter_elements(mask: int):
    """Yield set bit positions in ascending order."""
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def mask_of(elements) -> int:
    m = 0
    for e in elements:
        m |= 1 << e
    return m


def subset_str(mask: int) -> str:
    if mask == 0:
        return "{}"
    return "{" + ",".join(str(e) for e in iter_elements(mask)) + "}"


class SetFunctionOracle:
    """A set function accessed through value queries.

    kind is one of: explicit-table, cut-function, concave-cardinality,
    matroid-rank, shifted-sfm, contraction, b-to-f. The payload is
    kind-specific and immutable after construction; eval_count is the
    only mutable state (callers running concurrent solves should use
    one oracle per thread and aggregate the counters).
    """

    __slots__ = ("n", "kind", "payload", "eval_count", "_fn")

    def __init__(self, n: int, kind: str, payload, fn: Callable[[int], Fraction]):
        check_ground(n)
        self.n = n
        self.kind = kind
        self.payload = payload
        self.eval_count = 0
        self._fn = fn

    def eval(self, mask: int) -> Fraction:
        if mask < 0 or mask >> self.n:
            raise DimensionMismatch(
                f"mask {mask:#x} has bits outside ground set of size {self.n}"
            )
        self.eval_count += 1
        return self._fn(mask)

    __call__ = eval

    def __repr__(self):
        return f"SetFunctionOracle(n={self.n}, kind={self.kind!r})"


def explicit_table(n: int, values) -> SetFunctionOracle:
    """Oracle backed by a full table indexed by subset bitmask."""
    check_ground(n)
    if n > 20:
        raise GroundSetTooLarge(f"explicit table for n={n} would need 2^{n} entries")
    if isinstance(values, dict):
        table = [None] * (1 << n)
        for k, v in values.items():
            table[k] = as_rat(v)
        if any(v is None for v in table):
            missing = next(i for i, v in enumerate(table) if v is None)
            raise IncompleteTable(f"no value for subset {subset_str(missing)}")
        vals = table
    else:
        vals = [as_rat(v) for v in values]
        if len(vals) != (1 << n):
            raise IncompleteTable(f"expected {1 << n} values, got {len(vals)}")
    return SetFunctionOracle(n, "explicit-table", tuple(vals), lambda m: vals[m])


def cut_function(nodes: int, edges, source: int, sink: int) -> SetFunctionOracle:
    """Directed cut capacity of a capacitated digraph.

    Ground elements are the internal nodes (all nodes except source and
    sink) relabeled 0..n-1 in ascending node order. eval(A) is the total
    capacity of edges leaving {source} + A.
    """
    if nodes < 3:
        raise MalformedGraph("need at least source, sink, and one internal node")
    if not (0 <= source < nodes and 0 <= sink < nodes) or source == sink:
        raise MalformedGraph(f"bad source/sink pair ({source}, {sink})")
    elist = []
    for e in edges:
        u, v, cap = e
        if not (0 <= u < nodes and 0 <= v < nodes):
            raise MalformedGraph(f"edge ({u},{v}) outside node range")
        cap = as_rat(cap)
        if cap < 0:
            raise MalformedGraph(f"negative capacity on edge ({u},{v})")
        if u != v:
            elist.append((u, v, cap))
    internal = [v for v in range(nodes) if v != source and v != sink]
    n = len(internal)
    check_ground(n)
    node_bit = {v: i for i, v in enumerate(internal)}

    def side(mask: int, v: int) -> bool:
        # True when v lies on the source side of the cut
        if v == source:
            return True
        if v == sink:
            return False
        return bool(mask >> node_bit[v] & 1)

    def value(mask: int) -> Fraction:
        total = ZERO
        for u, v, cap in elist:
            if side(mask, u) and not side(mask, v):
                total += cap
        return total

    payload = {
        "nodes": nodes,
        "edges": tuple((u, v, cap) for u, v, cap in elist),
        "source": source,
        "sink": sink,
        "internal": tuple(internal),
    }
    return SetFunctionOracle(n, "cut-function", payload, value)


def concave_cardinality(phi, modular=None) -> SetFunctionOracle:
    """f(A) = phi(|A|) + m(A) for a concave phi with phi(0) = 0.

    Requires the result to be a polymatroid rank function: phi increments
    non-increasing (submodularity) and last increment + min(m) >= 0
    (monotonicity).
    """
    steps = rat_vector(phi)
    n = len(steps) - 1
    check_ground(n)
    if steps[0] != 0:
        raise NotAPolymatroid(f"phi(0) = {fmt(steps[0])}, must be 0")
    inc = [steps[k + 1] - steps[k] for k in range(n)]
    for k in range(n - 1):
        if inc[k] < inc[k + 1]:
            raise NotAPolymatroid(f"phi increments rise at cardinality {k + 1}")
    m = rat_vector(modular) if modular is not None else tuple([ZERO] * n)
    if len(m) != n:
        raise DimensionMismatch(f"modular vector length {len(m)} != n={n}")
    worst = inc[-1] + min(m)
    if worst < 0:
        raise NotAPolymatroid(
            f"not increasing: last phi increment {fmt(inc[-1])} + min modular"
            f" {fmt(min(m))} < 0"
        )

    def value(mask: int) -> Fraction:
        total = steps[mask.bit_count()]
        for e in iter_elements(mask):
            total += m[e]
        return total

    return SetFunctionOracle(n, "concave-cardinality", (steps, m), value)


def matroid_rank(n: int, blocks, caps) -> SetFunctionOracle:
    """Partition-matroid rank: sum over blocks of min(|A & block|, cap)."""
    check_ground(n)
    bmasks = [mask_of(b) for b in blocks]
    union = 0
    total = 0
    for bm in bmasks:
        union |= bm
        total += bm.bit_count()
    if union != full_mask(n) or total != n:
        raise DimensionMismatch("blocks must partition 0..n-1")
    caps = [int(c) for c in caps]
    if len(caps) != len(bmasks) or any(c < 0 for c in caps):
        raise DimensionMismatch("need one nonnegative cap per block")

    def value(mask: int) -> Fraction:
        r = 0
        for bm, cap in zip(bmasks, caps):
            r += min((mask & bm).bit_count(), cap)
        return Fraction(r)

    return SetFunctionOracle(n, "matroid-rank", (tuple(bmasks), tuple(caps)), value)


def shifted_sfm(
    psi: SetFunctionOracle, shift, floor, keep_mask: Optional[int] = None
) -> SetFunctionOracle:
    """Polymatroid hull of a general submodular psi.

    f(empty) = 0 and f(A) = psi(A) + shift(A) - floor otherwise. With
    shift_i >= psi(E\\{i}) - psi(E) componentwise and
    floor <= min over nonempty A of psi(A) + shift(A), the result is
    normalized, increasing, and submodular. Queries outside keep_mask
    raise OverlapError.
    """
    shift = rat_vector(shift)
    floor = as_rat(floor)
    keep = full_mask(psi.n) if keep_mask is None else keep_mask
    if len(shift) != psi.n:
        raise DimensionMismatch(f"shift length {len(shift)} != n={psi.n}")

    def value(mask: int) -> Fraction:
        if mask & ~keep:
            raise OverlapError(
                f"subset {subset_str(mask)} leaves the kept ground set"
            )
        if mask == 0:
            return ZERO
        total = psi.eval(mask) - floor
        for e in iter_elements(mask):
            total += shift[e]
        return total

    return SetFunctionOracle(
        psi.n, "shifted-sfm", {"psi": psi, "shift": shift, "floor": floor, "keep": keep}, value
    )


def contraction(oracle: SetFunctionOracle, s_mask: int) -> SetFunctionOracle:
    """g(A) = f(S + A) - f(S) on the ground set without S."""
    base_at_s = oracle.eval(s_mask)

    def value(mask: int) -> Fraction:
        if mask & s_mask:
            raise OverlapError(
                f"subset {subset_str(mask)} intersects contracted set"
                f" {subset_str(s_mask)}"
            )
        if mask == 0:
            return ZERO
        return oracle.eval(s_mask | mask) - base_at_s

    return SetFunctionOracle(
        oracle.n, "contraction", {"base": oracle, "s": s_mask}, value
    )


@dataclass
class ValidityReport:
    normalized: bool
    increasing: bool
    submodular: bool
    mode: str
    # witness pair (A, B): for increasing A subset B with f(A) > f(B);
    # for submodular the exchange violation f(A)+f(B) < f(A|B)+f(A&B)
    witness_increasing: Optional[tuple] = None
    witness_submodular: Optional[tuple] = None
    empty_value: Optional[Fraction] = None

    @property
    def ok(self) -> bool:
        return self.normalized and self.increasing and self.submodular


def validate_polymatroid(
    oracle: SetFunctionOracle, mode: str = "auto", seed: int = 0, samples: int = 200
) -> ValidityReport:
    """Check normalized / increasing / submodular.

    mode 'exhaustive' checks every (A, i) and (A, B) pair and requires
    n <= 20; 'sample' draws seeded random pairs; 'auto' picks exhaustive
    for explicit tables and small n, sampling otherwise.
    """
    n = oracle.n
    if mode == "auto":
        mode = "exhaustive" if (oracle.kind == "explicit-table" or n <= 10) else "sample"
    if mode == "exhaustive" and n > 20:
        raise GroundSetTooLarge(f"exhaustive validation for n={n} > 20")

    e0 = oracle.eval(0)
    rep = ValidityReport(
        normalized=(e0 == 0), increasing=True, submodular=True, mode=mode, empty_value=e0
    )

    if mode == "exhaustive":
        # local exchange form: f(A+i)+f(A+j) >= f(A+i+j)+f(A) for all A, i<j
        size = 1 << n
        vals = [oracle.eval(m) for m in range(size)]
        for m in range(size):
            vm = vals[m]
            free = [i for i in range(n) if not m >> i & 1]
            for ai, i in enumerate(free):
                mi = m | 1 << i
                if rep.increasing and vals[mi] < vm:
                    rep.increasing = False
                    rep.witness_increasing = (m, mi)
                if rep.submodular:
                    for j in free[ai + 1 :]:
                        mj = m | 1 << j
                        if vals[mi] + vals[mj] < vals[mi | mj] + vm:
                            rep.submodular = False
                            rep.witness_submodular = (mi, mj)
                            break
            if not rep.increasing and not rep.submodular:
                break
        return rep

    rng = random.Random(f"validate:{seed}:{n}")
    fm = full_mask(n)
    for _ in range(samples):
        a = rng.getrandbits(n) & fm
        b = rng.getrandbits(n) & fm
        sub, sup = a & b, a | b
        fa, fb = oracle.eval(a), oracle.eval(b)
        if rep.increasing and oracle.eval(sub) > fa:
            rep.increasing = False
            rep.witness_increasing = (sub, a)
        if rep.submodular and fa + fb < oracle.eval(sup) + oracle.eval(sub):
            rep.submodular = False
            rep.witness_submodular = (a, b)
    return rep


@dataclass
class PolymatroidInstance:
    """A polymatroid LP instance: rank oracle f, costs c, side bounds d."""

    f: SetFunctionOracle
    c: tuple
    d: tuple
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.c = rat_vector(self.c)
        self.d = rat_vector(self.d)
        n = self.f.n
        if len(self.c) != n or len(self.d) != n:
            raise DimensionMismatch(
                f"|c|={len(self.c)}, |d|={len(self.d)} must equal n={n}"
            )
        if any(v < 0 for v in self.c):
            raise ValueError("cost vector must be nonnegative")
        if any(v < 0 for v in self.d):
            raise ValueError("side-constraint vector must be nonnegative")

    @property
    def n(self) -> int:
        return self.f.n


# ---------------------------------------------------------------------------
# instance generation

FAMILIES = ("cut-graph", "concave-cardinality-plus-modular", "coverage")

_FAMILY_ALIASES = {
    "cut": "cut-graph",
    "cut-graph": "cut-graph",
    "concave": "concave-cardinality-plus-modular",
    "concave-cardinality-plus-modular": "concave-cardinality-plus-modular",
    "coverage": "coverage",
}


def _rand_rat(rng: random.Random, lo: int, hi: int, den: int = 10) -> Fraction:
    # values like 17/10 in [lo, hi]
    return Fraction(rng.randint(lo * den, hi * den), den)


def _random_cut_polymatroid(n: int, rng: random.Random) -> SetFunctionOracle:
    nodes = n + 2
    source, sink = n, n + 1
    edges = []
    # sparse random digraph among internal nodes plus source/sink arcs
    for v in range(n):
        if rng.random() < 0.85:
            edges.append((source, v, _rand_rat(rng, 1, 6)))
        if rng.random() < 0.85:
            edges.append((v, sink, _rand_rat(rng, 1, 6)))
    want = max(n, int(1.5 * n))
    for _ in range(want):
        u = rng.randrange(n)
        v = rng.randrange(n)
        if u != v:
            edges.append((u, v, _rand_rat(rng, 1, 4)))
    if not edges:
        edges.append((source, 0, Fraction(1)))
    psi = cut_function(nodes, edges, source, sink)
    return cut_polymatroid_hull(psi)


def cut_polymatroid_hull(psi: SetFunctionOracle) -> SetFunctionOracle:
    """Normalized increasing hull of a cut function.

    Adds the modular shift max(0, psi(E\\i) - psi(E)) per element and
    rebases so the empty set maps to 0; submodularity is inherited.
    """
    n = psi.n
    fm = full_mask(n)
    top = psi.eval(fm)
    shift = []
    for i in range(n):
        di = psi.eval(fm ^ (1 << i)) - top
        shift.append(di if di > 0 else ZERO)
    floor = psi.eval(0) - vec_sum(shift) - 1
    return shifted_sfm(psi, shift, floor)


def _random_concave(n: int, rng: random.Random) -> SetFunctionOracle:
    # concave phi via sorted positive increments, plus nonnegative modular part
    incs = sorted((_rand_rat(rng, 1, 8, 4) for _ in range(n)), reverse=True)
    phi = [ZERO]
    for s in incs:
        phi.append(phi[-1] + s)
    m = [_rand_rat(rng, 0, 3, 4) for _ in range(n)]
    return concave_cardinality(phi, m)


def _random_coverage(n: int, rng: random.Random) -> SetFunctionOracle:
    if n > 20:
        raise GroundSetTooLarge(f"coverage family materializes a table; n={n} > 20")
    universe = max(4, 2 * n)
    weights = [_rand_rat(rng, 1, 5) for _ in range(universe)]
    covers = []
    for _ in range(n):
        pts = [p for p in range(universe) if rng.random() < 0.45]
        if not pts:
            pts = [rng.randrange(universe)]
        covers.append(mask_of(pts))
    table = []
    for mask in range(1 << n):
        covered = 0
        for e in iter_elements(mask):
            covered |= covers[e]
        table.append(vec_sum(weights[p] for p in iter_elements(covered)))
    return explicit_table(n, table)


def generate_instance(family: str, n: int, seed: int) -> PolymatroidInstance:
    """Deterministic random instance; f validates, d is inside P(f)."""
    fam = _FAMILY_ALIASES.get(family)
    if fam is None:
        raise UnsupportedFamily(f"unknown family {family!r}; know {sorted(_FAMILY_ALIASES)}")
    check_ground(n)
    rng = random.Random(f"{fam}:{n}:{seed}")
    if fam == "cut-graph":
        f = _random_cut_polymatroid(n, rng)
    elif fam == "concave-cardinality-plus-modular":
        f = _random_concave(n, rng)
    else:
        f = _random_coverage(n, rng)

    # costs: positive, with deliberate ties about a third of the time
    pool = [_rand_rat(rng, 1, 9) + Fraction(1, 10) for _ in range(max(2, n // 2))]
    c = []
    for _ in range(n):
        if rng.random() < 0.35:
            c.append(rng.choice(pool))
        else:
            c.append(_rand_rat(rng, 1, 9) + Fraction(1, 10))

    # d: scale down a random greedy vertex; stays in P(f) by downward closure
    order = list(range(n))
    rng.shuffle(order)
    prev = ZERO
    prefix = 0
    vert = [ZERO] * n
    for e in order:
        prefix |= 1 << e
        cur = f.eval(prefix)
        vert[e] = cur - prev
        prev = cur
    d = []
    for i in range(n):
        theta = Fraction(rng.randint(0, 8), 8)
        if rng.random() < 0.25:
            theta = ZERO
        d.append(vert[i] * theta)

    inst = PolymatroidInstance(f, c, d, meta={"family": fam, "n": n, "seed": seed})
    if n <= 12:
        bad = _membership_violation(f, d)
        if bad is not None:
            raise AssertionError(
                f"generator bug: d leaves P(f) on {subset_str(bad)}"
            )
    return inst


def _membership_violation(f: SetFunctionOracle, d) -> Optional[int]:
    dsum = [ZERO] * (1 << f.n)
    for mask in range(1, 1 << f.n):
        low = mask & -mask
        dsum[mask] = dsum[mask ^ low] + d[low.bit_length() - 1]
        if dsum[mask] > f.eval(mask):
            return mask
    return None


SFM_FAMILIES = ("cut", "coverage-cost", "concave-modular")


def generate_sfm_instance(family: str, n: int, seed: int) -> SetFunctionOracle:
    """Deterministic submodular (not necessarily monotone) test functions."""
    if family not in SFM_FAMILIES:
        raise UnsupportedFamily(f"unknown sfm family {family!r}; know {SFM_FAMILIES}")
    check_ground(n)
    rng = random.Random(f"sfm:{family}:{n}:{seed}")
    if family == "cut":
        nodes = n + 2
        source, sink = n, n + 1
        edges = []
        for v in range(n):
            edges.append((source, v, _rand_rat(rng, 0, 5)))
            edges.append((v, sink, _rand_rat(rng, 0, 5)))
        for _ in range(2 * n):
            u, v = rng.randrange(n), rng.randrange(n)
            if u != v:
                edges.append((u, v, _rand_rat(rng, 0, 3)))
        return cut_function(nodes, edges, source, sink)
    if family == "coverage-cost":
        cover = _random_coverage(n, rng)
        cost = [_rand_rat(rng, 0, 4) for _ in range(n)]
        table = []
        for mask in range(1 << n):
            table.append(
                cover.eval(mask) - vec_sum(cost[e] for e in iter_elements(mask))
            )
        return explicit_table(n, table)
    # concave-modular: concave cardinality part plus mixed-sign modular part
    incs = sorted((_rand_rat(rng, 0, 6, 4) for _ in range(n)), reverse=True)
    phi = [ZERO]
    for s in incs:
        phi.append(phi[-1] + s)
    m = [_rand_rat(rng, -4, 3, 4) for _ in range(n)]

    def value(mask: int) -> Fraction:
        total = phi[mask.bit_count()]
        for e in iter_elements(mask):
            total += m[e]
        return total

    return SetFunctionOracle(n, "concave-cardinality", (tuple(phi), tuple(m)), value)


# ---------------------------------------------------------------------------
# instance files

def _num_out(v: Fraction) -> object:
    return v.numerator if v.denominator == 1 else fmt(v)


def instance_to_doc(
    oracle: SetFunctionOracle, c=None, d=None, sense: str = "max-f"
) -> dict:
    if oracle.kind == "explicit-table":
        sf = {"kind": "explicit", "values": [_num_out(v) for v in oracle.payload]}
    elif oracle.kind == "cut-function":
        p = oracle.payload
        sf = {
            "kind": "cut",
            "nodes": p["nodes"],
            "edges": [[u, v, _num_out(cap)] for u, v, cap in p["edges"]],
            "source": p["source"],
            "sink": p["sink"],
        }
    elif oracle.kind == "shifted-sfm" and oracle.payload["psi"].kind == "cut-function":
        p = oracle.payload["psi"].payload
        sf = {
            "kind": "cut-polymatroid",
            "nodes": p["nodes"],
            "edges": [[u, v, _num_out(cap)] for u, v, cap in p["edges"]],
            "source": p["source"],
            "sink": p["sink"],
        }
    elif oracle.kind == "concave-cardinality":
        steps, m = oracle.payload
        sf = {
            "kind": "concave",
            "phi": [_num_out(v) for v in steps],
            "modular": [_num_out(v) for v in m],
        }
    else:
        raise UnsupportedFamily(f"cannot serialize oracle kind {oracle.kind!r}")
    doc = {"n": oracle.n, "set_function": sf}
    if c is not None:
        doc["c"] = [_num_out(as_rat(v)) for v in c]
    if d is not None:
        doc["d"] = [None if v is None else _num_out(as_rat(v)) for v in d]
    if sense != "max-f":
        doc["sense"] = sense
    return doc


def oracle_from_doc(doc: dict) -> SetFunctionOracle:
    sf = doc["set_function"]
    kind = sf["kind"]
    n = doc["n"]
    if kind == "explicit":
        return explicit_table(n, sf["values"])
    if kind in ("cut", "cut-polymatroid"):
        psi = cut_function(sf["nodes"], sf["edges"], sf["source"], sf["sink"])
        if psi.n != n:
            raise DimensionMismatch(
                f"declared n={n} but graph has {psi.n} internal nodes"
            )
        return cut_polymatroid_hull(psi) if kind == "cut-polymatroid" else psi
    if kind == "concave":
        return concave_cardinality(sf["phi"], sf.get("modular"))
    raise UnsupportedFamily(f"unknown set_function kind {kind!r}")


def load_instance(path: str):
    """Returns (oracle, c, d, doc). c/d are None when absent; d entries
    may be None (no bound, min-b sense only)."""
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    oracle = oracle_from_doc(doc)
    c = rat_vector(doc["c"]) if "c" in doc else None
    d = None
    if "d" in doc:
        d = tuple(None if v is None else as_rat(v) for v in doc["d"])
    return oracle, c, d, doc


def save_instance(path: str, doc: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
