"""Dense exact-rational LP solver.

Two-phase primal simplex with Bland's rule over Fractions. No
tolerances exist anywhere: optimal points satisfy constraints exactly,
infeasibility comes with a Farkas combination, unboundedness with a
ray, and every certificate is re-verified before it is returned.

Programs where constraints vastly outnumber variables (the brute-force
oracle materializes 2^n subset rows) are solved through their dual,
which has the small dimension; the recovered primal point is verified
against every original row before being trusted.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

from .errors import DimensionMismatch
from .rat import ONE, ZERO, as_rat, dot, rat_vector

REL_LE = "<="
REL_GE = ">="
REL_EQ = "="
_RELS = (REL_LE, REL_GE, REL_EQ)


class LinearProgram:
    """sense 'max' or 'min'; rows are (coeffs, rel, rhs) with rel in
    {'<=', '>=', '='}; variable lower bounds default to 0, upper bounds
    to none."""

    def __init__(self, sense: str, c, rows=None, lb=None, ub=None):
        if sense not in ("max", "min"):
            raise ValueError(f"sense must be 'max' or 'min', got {sense!r}")
        self.sense = sense
        self.c = rat_vector(c)
        n = len(self.c)
        self.rows = []
        for coeffs, rel, rhs in rows or ():
            coeffs = rat_vector(coeffs)
            if len(coeffs) != n:
                raise DimensionMismatch(
                    f"row has {len(coeffs)} coefficients, expected {n}"
                )
            if rel not in _RELS:
                raise ValueError(f"relation must be one of {_RELS}, got {rel!r}")
            self.rows.append((coeffs, rel, as_rat(rhs)))
        self.lb = rat_vector(lb) if lb is not None else tuple([ZERO] * n)
        if ub is None:
            self.ub = (None,) * n
        else:
            self.ub = tuple(None if u is None else as_rat(u) for u in ub)
        if len(self.lb) != n or len(self.ub) != n:
            raise DimensionMismatch("bound vectors must match variable count")

    @property
    def nvars(self) -> int:
        return len(self.c)


@dataclass
class LpOutcome:
    status: str  # optimal | infeasible | unbounded
    x: Optional[tuple] = None
    value: Optional[Fraction] = None
    dual: Optional[tuple] = None  # per original row; None when bounds used
    farkas: Optional[tuple] = None  # per original row; see solve()
    ray: Optional[tuple] = None  # improving direction in original variables
    pivots: int = 0


@dataclass
class FeasibilityReport:
    feasible: bool
    point: Optional[tuple] = None
    farkas: Optional[tuple] = None
    pivots: int = 0


# ---------------------------------------------------------------------------
# canonical-form simplex: max c x  s.t.  A x <= b, x >= 0


class _Canon:
    """One canonical solve. Columns: structural 0..nv-1, slack
    nv..nv+m-1, artificials after that."""

    def __init__(self, A, b, c):
        self.nv = len(c)
        self.m = len(A)
        self.c = list(c)
        self.T = []
        self.rhs = []
        self.basis = []
        self.negated = []
        self.art_of_row = {}
        self.row_alive = list(range(self.m))
        self.pivots = 0
        ncols = self.nv + self.m
        for i in range(self.m):
            row = list(A[i]) + [ZERO] * self.m
            row[self.nv + i] = ONE
            rhs = b[i]
            neg = rhs < 0
            if neg:
                row = [-v for v in row]
                rhs = -rhs
            self.T.append(row)
            self.rhs.append(rhs)
            self.basis.append(self.nv + i if not neg else -1)
            self.negated.append(neg)
        for i in range(self.m):
            if self.basis[i] == -1:
                for j in range(self.m):
                    self.T[j].append(ONE if j == i else ZERO)
                self.art_of_row[i] = ncols
                self.basis[i] = ncols
                ncols += 1
        self.ncols = ncols
        self.first_art = self.nv + self.m

    def _pivot(self, r: int, col: int, z, zval):
        prow = self.T[r]
        inv = ONE / prow[col]
        if inv != 1:
            self.T[r] = prow = [v * inv for v in prow]
            self.rhs[r] *= inv
        for i in range(len(self.T)):
            if i == r:
                continue
            f = self.T[i][col]
            if f:
                trow = self.T[i]
                self.T[i] = [a - f * p for a, p in zip(trow, prow)]
                self.rhs[i] -= f * self.rhs[r]
        f = z[col]
        if f:
            z[:] = [a - f * p for a, p in zip(z, prow)]
            zval[0] += f * self.rhs[r]
        self.basis[r] = col
        self.pivots += 1

    def _price(self, z, zval):
        for r, bc in enumerate(self.basis):
            f = z[bc]
            if f:
                z[:] = [a - f * p for a, p in zip(z, self.T[r])]
                zval[0] += f * self.rhs[r]

    def _run(self, z, zval, allowed_end: int):
        """Bland's rule main loop; returns 'optimal' or entering col on
        unboundedness."""
        while True:
            enter = -1
            for j in range(allowed_end):
                if z[j] > 0:
                    enter = j
                    break
            if enter < 0:
                return "optimal", -1
            leave = -1
            best = None
            for r in range(len(self.T)):
                a = self.T[r][enter]
                if a > 0:
                    ratio = self.rhs[r] / a
                    if best is None or ratio < best or (
                        ratio == best and self.basis[r] < self.basis[leave]
                    ):
                        best = ratio
                        leave = r
            if leave < 0:
                return "unbounded", enter
            self._pivot(leave, enter, z, zval)

    def phase1(self):
        """Returns (feasible, farkas_u) where u_i = c_B B^-1 e_i per
        original canonical row (already sign-corrected to y >= 0)."""
        if not self.art_of_row:
            return True, None
        z = [ZERO] * self.ncols
        for i, ac in self.art_of_row.items():
            z[ac] = -ONE
        zval = [ZERO]
        self._price(z, zval)
        status, _ = self._run(z, zval, self.ncols)
        assert status == "optimal", "phase 1 cannot be unbounded"
        if zval[0] == 0:
            self._evict_artificials()
            return True, None
        y = []
        for i in range(self.m):
            if self.negated[i]:
                u_i = -ONE - z[self.art_of_row[i]]
                y.append(-u_i)
            else:
                u_i = -z[self.nv + i]
                y.append(u_i)
        return False, y

    def _evict_artificials(self):
        drop = []
        for r in range(len(self.T)):
            bc = self.basis[r]
            if bc < self.first_art:
                continue
            done = False
            for col in range(self.first_art):
                if self.T[r][col] != 0:
                    z = [ZERO] * self.ncols
                    self._pivot(r, col, z, [ZERO])
                    done = True
                    break
            if not done:
                drop.append(r)
        for r in reversed(drop):
            del self.T[r], self.rhs[r], self.basis[r]
            del self.row_alive[r]

    def phase2(self):
        """Returns (status, x, value, dual_y, ray). dual_y covers all m
        canonical rows (dropped redundant rows get 0)."""
        z = [ZERO] * self.ncols
        for j in range(self.nv):
            z[j] = self.c[j]
        zval = [ZERO]
        self._price(z, zval)
        status, enter = self._run(z, zval, self.first_art)
        if status == "unbounded":
            ray = [ZERO] * self.nv
            if enter < self.nv:
                ray[enter] = ONE
            for r, bc in enumerate(self.basis):
                if bc < self.nv:
                    ray[bc] = -self.T[r][enter]
            return "unbounded", None, None, None, ray
        x = [ZERO] * self.nv
        for r, bc in enumerate(self.basis):
            if bc < self.nv:
                x[bc] = self.rhs[r]
        y = [ZERO] * self.m
        alive = set(self.row_alive)
        for i in range(self.m):
            if i not in alive:
                continue
            if self.negated[i]:
                ac = self.art_of_row[i]
                u_i = -z[ac]
            else:
                u_i = -z[self.nv + i]
            y[i] = u_i if not self.negated[i] else -u_i
        return "optimal", x, zval[0], y, None


def _solve_canonical(A, b, c):
    """Returns dict over the canonical program. Keys: status, and then
    x/value/dual, or farkas, or ray; plus pivots."""
    cn = _Canon(A, b, c)
    feas, farkas = cn.phase1()
    if not feas:
        assert all(v >= 0 for v in farkas)
        for j in range(len(c)):
            s = ZERO
            for i in range(len(A)):
                s += farkas[i] * A[i][j]
            assert s >= 0, "bad Farkas direction"
        assert dot(farkas, b) < 0, "Farkas does not refute the system"
        return {"status": "infeasible", "farkas": farkas, "pivots": cn.pivots}
    status, x, value, y, ray = cn.phase2()
    if status == "unbounded":
        for i in range(len(A)):
            assert dot(A[i], ray) <= 0, "ray leaves the feasible cone"
        assert dot(c, ray) > 0, "ray does not improve"
        return {"status": "unbounded", "ray": ray, "pivots": cn.pivots}
    for i in range(len(A)):
        assert dot(A[i], x) <= b[i], "primal row violated"
    assert all(v >= 0 for v in x)
    assert dot(c, x) == value
    assert all(v >= 0 for v in y)
    for j in range(len(c)):
        s = ZERO
        for i in range(len(A)):
            s += y[i] * A[i][j]
        assert s >= c[j], "dual row violated"
    assert dot(y, b) == value, "strong duality failed"
    return {"status": "optimal", "x": x, "value": value, "dual": y, "pivots": cn.pivots}


# ---------------------------------------------------------------------------
# general-form wrapper

def _canonicalize(lp: LinearProgram):
    """Shift lower bounds to zero, split equalities, flip >= rows, add
    upper-bound rows. Returns (A, b, c, cmap) where cmap[r] =
    (orig_index, sign) for original rows and (None, _) for bound rows."""
    n = lp.nvars
    sign = -1 if lp.sense == "min" else 1
    c = [sign * v for v in lp.c]
    A, b, cmap = [], [], []
    for idx, (coeffs, rel, rhs) in enumerate(lp.rows):
        shifted = rhs - dot(coeffs, lp.lb)
        if rel in (REL_LE, REL_EQ):
            A.append(list(coeffs))
            b.append(shifted)
            cmap.append((idx, 1))
        if rel in (REL_GE, REL_EQ):
            A.append([-v for v in coeffs])
            b.append(-shifted)
            cmap.append((idx, -1))
    for j in range(n):
        if lp.ub[j] is not None:
            row = [ZERO] * n
            row[j] = ONE
            A.append(row)
            b.append(lp.ub[j] - lp.lb[j])
            cmap.append((None, 1))
    return A, b, c, cmap


def _default_bounds(lp: LinearProgram) -> bool:
    return all(v == 0 for v in lp.lb) and all(u is None for u in lp.ub)


def _map_rowvec(lp: LinearProgram, cmap, y_canon):
    """Fold canonical row multipliers back onto original rows."""
    out = [ZERO] * len(lp.rows)
    for yk, (idx, sign) in zip(y_canon, cmap):
        if idx is not None:
            out[idx] += sign * yk
    return out


def solve(lp: LinearProgram) -> LpOutcome:
    """Exact solve. On optimal: x, value, and (for programs with default
    bounds) a dual vector per original row with sign conventions
    u_r >= 0 on rows aligned with the sense ('<=' for max, '>=' for min)
    and sum_r u_r * rhs_r == value. On infeasible: farkas multipliers per
    original row proving the system inconsistent with the bounds. On
    unbounded: an improving ray."""
    A, b, c, cmap = _canonicalize(lp)
    n = lp.nvars
    if len(A) >= max(48, 4 * n) and n >= 1:
        out = _solve_by_dual(lp, A, b, c, cmap)
        if out is not None:
            return out
    res = _solve_canonical(A, b, c)
    return _finish(lp, cmap, res)


def _finish(lp: LinearProgram, cmap, res) -> LpOutcome:
    sense_sign = -1 if lp.sense == "min" else 1
    if res["status"] == "infeasible":
        fk = _map_rowvec(lp, cmap, res["farkas"])
        return LpOutcome(status="infeasible", farkas=tuple(fk), pivots=res["pivots"])
    if res["status"] == "unbounded":
        ray = res["ray"]
        return LpOutcome(status="unbounded", ray=tuple(ray), pivots=res["pivots"])
    x = tuple(xt + l for xt, l in zip(res["x"], lp.lb))
    direct = dot(lp.c, x)
    shifted = res["value"] + sense_sign * dot(lp.c, lp.lb)
    assert sense_sign * shifted == direct, "objective bookkeeping error"
    dual = None
    if _default_bounds(lp):
        u = _map_rowvec(lp, cmap, res["dual"])
        if lp.sense == "min":
            u = [-v for v in u]
        for (coeffs, rel, rhs), ur in zip(lp.rows, u):
            if rel == REL_LE:
                assert (ur >= 0) if lp.sense == "max" else (ur <= 0)
            elif rel == REL_GE:
                assert (ur <= 0) if lp.sense == "max" else (ur >= 0)
        for j in range(lp.nvars):
            s = ZERO
            for (coeffs, rel, rhs), ur in zip(lp.rows, u):
                s += ur * coeffs[j]
            if lp.sense == "max":
                assert s >= lp.c[j], "dual stationarity violated"
            else:
                assert s <= lp.c[j], "dual stationarity violated"
        assert sum(
            (ur * rhs for (_, _, rhs), ur in zip(lp.rows, u)), ZERO
        ) == direct, "dual objective mismatch"
        dual = tuple(u)
    _verify_point(lp, x)
    return LpOutcome(
        status="optimal", x=x, value=direct, dual=dual, pivots=res["pivots"]
    )


def _verify_point(lp: LinearProgram, x) -> None:
    for coeffs, rel, rhs in lp.rows:
        lhs = dot(coeffs, x)
        if rel == REL_LE:
            assert lhs <= rhs, "<= row violated"
        elif rel == REL_GE:
            assert lhs >= rhs, ">= row violated"
        else:
            assert lhs == rhs, "= row violated"
    for xj, l, u in zip(x, lp.lb, lp.ub):
        assert xj >= l
        assert u is None or xj <= u


def _solve_by_dual(lp: LinearProgram, A, b, c, cmap) -> Optional[LpOutcome]:
    """Solve max c x, Ax <= b, x >= 0 through its dual min b y,
    A^T y >= c, y >= 0 (canonical: max -b y, -A^T y <= -c)."""
    m, n = len(A), len(c)
    AD = [[-A[i][j] for i in range(m)] for j in range(n)]
    bD = [-v for v in c]
    cD = [-v for v in b]
    res = _solve_canonical(AD, bD, cD)
    if res["status"] == "infeasible":
        return None  # primal unbounded or infeasible: retry directly
    if res["status"] == "unbounded":
        # improving dual ray certifies primal infeasibility
        ray = res["ray"]
        assert all(v >= 0 for v in ray)
        return _finish(lp, cmap, {"status": "infeasible", "farkas": ray, "pivots": res["pivots"]})
    y = res["x"]  # dual optimum = primal row multipliers
    x = res["dual"]  # canonical dual of the dual = primal point
    value = -res["value"]
    for i in range(m):
        assert dot(A[i], x) <= b[i], "recovered primal point infeasible"
    assert all(v >= 0 for v in x)
    assert dot(c, x) == value, "primal/dual value mismatch"
    return _finish(
        lp, cmap, {"status": "optimal", "x": x, "value": value, "dual": y, "pivots": res["pivots"]}
    )


def feasible(lp: LinearProgram):
    """Feasibility of the constraint system alone (objective ignored)."""
    A, b, c, cmap = _canonicalize(lp)
    cn = _Canon(A, b, [ZERO] * lp.nvars)
    ok, farkas = cn.phase1()
    if ok:
        x = [ZERO] * lp.nvars
        for r, bc in enumerate(cn.basis):
            if bc < lp.nvars:
                x[bc] = cn.rhs[r]
        pt = tuple(xt + l for xt, l in zip(x, lp.lb))
        _verify_point(lp, pt)
        return FeasibilityReport(True, point=pt, pivots=cn.pivots)
    fk = _map_rowvec(lp, cmap, farkas)
    return FeasibilityReport(False, farkas=tuple(fk), pivots=cn.pivots)
