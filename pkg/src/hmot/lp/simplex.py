"""Bounded-variable revised simplex on a sparse LU-factorized basis.

Two phases with one artificial column per row (equalities are never split).
The basis inverse is kept as a SuperLU factorization followed by a product
of eta matrices; it is refactorized every ``refactor_every`` pivots, and the
condition number is estimated at each refactorization.  Pricing is Devex
(an approximate steepest edge) with a Harris two-pass ratio test; after
``bland_after`` consecutive degenerate pivots the method switches to Bland's
smallest-index rule until it makes progress again.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, onenormest, splu

from ..exceptions import NumericalInstabilityError
from .model import EQ, GE, LE, LPModel

_BASIC, _AT_LB, _AT_UB, _FREE, _FIXED = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class SimplexOptions:
    """Pivoting tolerances of the internal solver (reported tolerances are in ``model``)."""

    max_iter: int = 1_000_000
    feas_tol: float = 1e-9
    opt_tol: float = 1e-9
    pivot_tol: float = 1e-9
    refactor_every: int = 64
    bland_after: int = 500
    max_condition: float = 1e14
    scale: bool = True


@dataclass
class SimplexResult:
    status: str
    x: np.ndarray | None
    y: np.ndarray | None  # min-form duals, d(min objective)/d rhs
    iterations: int
    farkas_rows: np.ndarray | None = None
    message: str = ""


def _equilibrate(A: sp.csc_matrix, passes: int = 4):
    """Geometric row/column scaling factors ``R, C`` so that ``R A C`` is near unit size."""
    m, n = A.shape
    R = np.ones(m)
    C = np.ones(n)
    if A.nnz == 0:
        return R, C
    coo = A.tocoo()
    absv = np.abs(coo.data)
    for _ in range(passes):
        v = absv * R[coo.row] * C[coo.col]
        rmax = np.zeros(m)
        rmin = np.full(m, np.inf)
        np.maximum.at(rmax, coo.row, v)
        np.minimum.at(rmin, coo.row, v)
        ok = rmax > 0
        R[ok] /= np.sqrt(rmax[ok] * rmin[ok])
        v = absv * R[coo.row] * C[coo.col]
        cmax = np.zeros(n)
        cmin = np.full(n, np.inf)
        np.maximum.at(cmax, coo.col, v)
        np.minimum.at(cmin, coo.col, v)
        ok = cmax > 0
        C[ok] /= np.sqrt(cmax[ok] * cmin[ok])
    # powers of two keep the scaling exact in floating point
    return 2.0 ** np.round(np.log2(R)), 2.0 ** np.round(np.log2(C))


class _Engine:
    def __init__(self, M: sp.csc_matrix, b, lb, ub, opts: SimplexOptions):
        self.M = M
        self.MT = M.T.tocsr()
        self.m, self.N = M.shape
        self.b = b
        self.lb = lb
        self.ub = ub
        self.opts = opts
        self.iterations = 0

    # basis factorization -------------------------------------------------

    def factor(self):
        B = self.M[:, self.basis].tocsc()
        try:
            self.lu = splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})
        except RuntimeError as exc:
            raise NumericalInstabilityError(f"basis matrix is singular: {exc}") from exc
        self.etas = []
        lu = self.lu
        op = LinearOperator(
            B.shape, matvec=lu.solve, rmatvec=lambda v: lu.solve(v, trans="T"), dtype=float
        )
        binv_norm = onenormest(op) if self.m > 4 else np.abs(np.linalg.inv(B.toarray())).sum(0).max()
        cond = float(abs(B).sum(axis=0).max()) * float(binv_norm)
        if not np.isfinite(cond) or cond > self.opts.max_condition:
            raise NumericalInstabilityError(f"basis condition estimate {cond:.3g} exceeds {self.opts.max_condition:.0e}")
        self.condition = cond

    def ftran(self, a):
        v = self.lu.solve(a)
        for r, col in self.etas:
            vr = v[r] / col[r]
            v -= vr * col
            v[r] = vr
        return v

    def btran(self, c):
        z = np.array(c, dtype=float)
        for r, col in reversed(self.etas):
            z[r] = (z[r] - (col @ z - col[r] * z[r])) / col[r]
        return self.lu.solve(z, trans="T")

    def column(self, j):
        out = np.zeros(self.m)
        lo, hi = self.M.indptr[j], self.M.indptr[j + 1]
        out[self.M.indices[lo:hi]] = self.M.data[lo:hi]
        return out

    def recompute_primal(self):
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = self.ftran(self.b - self.M @ xn)

    def set_state(self, j):
        lo, hi = self.lb[j], self.ub[j]
        if lo == hi:
            self.state[j] = _FIXED
        elif self.x[j] == hi:
            self.state[j] = _AT_UB
        elif self.x[j] == lo:
            self.state[j] = _AT_LB
        else:
            self.state[j] = _FREE
        self.can_inc[j] = self.state[j] in (_AT_LB, _FREE)
        self.can_dec[j] = self.state[j] in (_AT_UB, _FREE)

    # one phase -----------------------------------------------------------

    def run(self, cost):
        o = self.opts
        y = self.btran(cost[self.basis])
        d = cost - self.MT @ y
        d[self.basis] = 0.0
        w = np.ones(self.N)
        stalled = 0
        bland = False
        since_factor = len(self.etas)
        while True:
            if self.iterations >= o.max_iter:
                return "iteration_limit"
            score = np.maximum(np.where(self.can_inc, -d, 0.0), np.where(self.can_dec, d, 0.0))
            cand = score > o.opt_tol
            if not cand.any():
                # confirm with fresh reduced costs before declaring optimality
                y = self.btran(cost[self.basis])
                d_fresh = cost - self.MT @ y
                d_fresh[self.basis] = 0.0
                score = np.maximum(np.where(self.can_inc, -d_fresh, 0.0), np.where(self.can_dec, d_fresh, 0.0))
                if not (score > o.opt_tol).any():
                    return "optimal"
                d = d_fresh
                continue
            if bland:
                q = int(np.flatnonzero(cand)[0])
            else:
                q = int(np.argmax(np.where(cand, score * score / w, -1.0)))
            direction = 1.0 if (self.can_inc[q] and d[q] < 0) else -1.0

            alpha = self.ftran(self.column(q))
            delta = direction * alpha
            xb = self.x[self.basis]
            lbb = self.lb[self.basis]
            ubb = self.ub[self.basis]
            dec = (delta > o.pivot_tol) & np.isfinite(lbb)
            inc = (delta < -o.pivot_tol) & np.isfinite(ubb)
            ratio = np.full(self.m, np.inf)
            ratio[dec] = (xb[dec] - lbb[dec]) / delta[dec]
            ratio[inc] = (ubb[inc] - xb[inc]) / -delta[inc]
            ratio = np.maximum(ratio, 0.0)
            if bland:
                tmin = ratio.min()
                ties = np.flatnonzero(ratio <= tmin + 1e-12) if np.isfinite(tmin) else np.empty(0, int)
                r = int(ties[np.argmin(self.basis[ties])]) if len(ties) else -1
            else:
                relaxed = np.full(self.m, np.inf)
                relaxed[dec] = (xb[dec] - lbb[dec] + o.feas_tol) / delta[dec]
                relaxed[inc] = (ubb[inc] - xb[inc] + o.feas_tol) / -delta[inc]
                # a basic value already past its bound by more than the tolerance makes tmax negative
                tmax = max(relaxed.min(), 0.0)
                if np.isfinite(tmax):
                    ok = np.flatnonzero(ratio <= tmax)
                    r = int(ok[np.argmax(np.abs(delta[ok]))])
                else:
                    r = -1
            theta = ratio[r] if r >= 0 else np.inf
            span = self.ub[q] - self.lb[q]
            if span <= theta:
                theta, r = span, -1
            if not np.isfinite(theta):
                return "unbounded"

            if r >= 0:
                rho = self.btran(np.eye(1, self.m, r).ravel())
                arow = self.MT @ rho
                piv = arow[q]
                if abs(piv - alpha[r]) > 1e-6 * (1 + abs(alpha[r])):
                    # factorization drift: rebuild and price again
                    self.factor()
                    self.recompute_primal()
                    since_factor = 0
                    y = self.btran(cost[self.basis])
                    d = cost - self.MT @ y
                    d[self.basis] = 0.0
                    continue

            self.iterations += 1
            if theta <= 1e-12:
                stalled += 1
                if stalled >= o.bland_after:
                    bland = True
            else:
                stalled = 0
                bland = False

            self.x[q] += direction * theta
            self.x[self.basis] = xb - theta * delta
            if r < 0:
                # bound flip, basis unchanged
                self.x[q] = self.ub[q] if direction > 0 else self.lb[q]
                self.set_state(q)
                continue

            p = int(self.basis[r])
            self.x[p] = self.lb[p] if delta[r] > 0 else self.ub[p]
            dq = d[q]
            d -= (dq / piv) * arow
            w = np.maximum(w, (arow / piv) ** 2 * w[q])
            w[p] = max(w[q] / piv**2, 1.0)
            self.basis[r] = q
            self.state[q] = _BASIC
            self.can_inc[q] = self.can_dec[q] = False
            self.set_state(p)
            d[self.basis] = 0.0
            self.etas.append((r, alpha))
            since_factor += 1
            if since_factor >= o.refactor_every:
                self.factor()
                self.recompute_primal()
                since_factor = 0
                y = self.btran(cost[self.basis])
                d = cost - self.MT @ y
                d[self.basis] = 0.0


def simplex(model: LPModel, options: SimplexOptions | None = None) -> SimplexResult:
    """Solve ``model`` with the internal revised simplex.

    Returns primal values and min-form duals in the model's original scaling.
    """
    o = options or SimplexOptions()
    sgn = 1.0 if model.sense == "min" else -1.0
    A = model.A.tocsc()
    m, n = A.shape
    b = np.array(model.rhs, dtype=float)
    c = sgn * np.array(model.c, dtype=float)
    lb = np.array(model.lb, dtype=float)
    ub = np.array(model.ub, dtype=float)
    if o.scale:
        R, C = _equilibrate(A)
    else:
        R, C = np.ones(m), np.ones(n)
    As = sp.diags(R) @ A @ sp.diags(C)
    bs = R * b
    cs = C * c
    lbs = lb / C
    ubs = ub / C

    ineq = np.flatnonzero(model.relations != EQ)
    k = len(ineq)
    S = sp.csc_matrix((np.ones(k), (ineq, np.arange(k))), shape=(m, k))
    s_lb = np.where(model.relations[ineq] == LE, 0.0, -np.inf)
    s_ub = np.where(model.relations[ineq] == GE, 0.0, np.inf)

    # starting point: structurals at a finite bound (or zero if free)
    x0 = np.where(np.isfinite(lbs), lbs, np.where(np.isfinite(ubs), ubs, 0.0))
    resid = bs - As @ x0
    slack_basic = np.zeros(m, dtype=bool)
    slack_of_row = np.full(m, -1)
    slack_of_row[ineq] = np.arange(k)
    le = model.relations == LE
    ge = model.relations == GE
    slack_basic[le] = resid[le] >= 0
    slack_basic[ge] = resid[ge] <= 0
    sigma = np.where(resid >= 0, 1.0, -1.0)
    D = sp.diags(sigma, format="csc")

    M = sp.hstack([As, S, D], format="csc")
    N = n + k + m
    art = np.arange(n + k, N)
    lo = np.concatenate([lbs, s_lb, np.zeros(m)])
    hi = np.concatenate([ubs, s_ub, np.full(m, np.inf)])
    x = np.concatenate([x0, np.zeros(k), np.zeros(m)])
    basis = np.where(slack_basic, n + slack_of_row, art)
    x[basis] = np.where(slack_basic, resid, np.abs(resid))

    eng = _Engine(M, bs, lo, hi, o)
    eng.x = x
    eng.basis = basis.astype(np.int64)
    eng.state = np.full(N, _AT_LB, dtype=np.int8)
    eng.can_inc = np.zeros(N, dtype=bool)
    eng.can_dec = np.zeros(N, dtype=bool)
    nb = np.ones(N, dtype=bool)
    nb[eng.basis] = False
    fixed = lo == hi
    at_ub = nb & ~fixed & (x == hi)
    at_lb = nb & ~fixed & (x == lo)
    free = nb & ~fixed & ~at_ub & ~at_lb
    eng.state[:] = _BASIC
    eng.state[fixed & nb] = _FIXED
    eng.state[at_lb] = _AT_LB
    eng.state[at_ub] = _AT_UB
    eng.state[free] = _FREE
    eng.can_inc = at_lb | free
    eng.can_dec = at_ub | free
    eng.factor()

    # phase 1: drive artificials to zero
    if x[art].sum() > 0:
        cost1 = np.zeros(N)
        cost1[art] = 1.0
        status = eng.run(cost1)
        if status == "iteration_limit":
            return SimplexResult(status, None, None, eng.iterations, message="iteration cap in phase 1")
        infeas = eng.x[art].sum()
        if infeas > 1e-8 * (1.0 + np.abs(bs).max(initial=0.0)):
            y1 = eng.btran(cost1[eng.basis])
            farkas = np.flatnonzero(np.abs(y1) > 1e-9)
            return SimplexResult(
                "infeasible", None, R * y1, eng.iterations, farkas_rows=farkas,
                message=f"phase 1 ended with artificial mass {infeas:.3g}",
            )
    # artificials are fixed at zero from now on
    eng.ub[art] = 0.0
    nb_art = art[eng.state[art] != _BASIC]
    eng.x[nb_art] = 0.0
    eng.state[nb_art] = _FIXED
    eng.can_inc[nb_art] = eng.can_dec[nb_art] = False

    cost2 = np.concatenate([cs, np.zeros(k + m)])
    status = eng.run(cost2)
    if status != "optimal":
        return SimplexResult(status, None, None, eng.iterations, message=f"phase 2 ended {status}")
    eng.factor()
    eng.recompute_primal()
    y = eng.btran(cost2[eng.basis])
    xs = eng.x[:n] * C
    # snap tiny bound violations left by the Harris ratio test
    xs = np.minimum(np.maximum(xs, lb), ub)
    return SimplexResult("optimal", xs, R * y, eng.iterations)
