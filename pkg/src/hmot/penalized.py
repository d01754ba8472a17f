"""Gini-penalized homogeneity and its Frank-Wolfe solver.

The penalized problem trades the homogeneity constraint for a cost
``sum_tuples (1/r) G(theta x K_s, theta x K_t)`` in the objective, with ``G``
the Gini (chi-square) divergence.  On couplings with pinned marginals the
kernels are linear in the path weights, so the penalty is a sum of
quadratic-over-linear terms and the penalized objective is concave over the
martingale polytope.  Frank-Wolfe uses the transport LP as its linear oracle.

Weak duality: a portfolio that dominates the claim after paying the quadratic
transaction cost ``(r/4) g(S_t, S_{t+tau})^2 dtheta/dmu_t(S_t)`` per swap
costs at least the penalized value.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .exceptions import InfeasibleError, InputError
from .hedging import HedgePortfolio, _lookup, hedge_slack
from .lp import HighsSession, LPBuilder, LPModel, solve
from .lp.model import EQ, LE
from .measures import FiniteMeasure, match_atoms
from .problem import Mode, ProblemSpec, parse_r
from .transport import Coupling, _meet_maps, build_primal, union_values

log = logging.getLogger(__name__)

# below this a kernel mass counts as zero when deciding absolute continuity
ZERO_MASS = 1e-13
TRACE_HEADER = ("iter", "objective", "fw_gap", "step")


def gini(nu: FiniteMeasure, mu: FiniteMeasure) -> float:
    """Gini divergence ``sum (nu - mu)^2 / mu`` of ``nu`` with respect to ``mu``.

    For probability measures this is ``sum nu^2 / mu - 1``.  Atoms with
    ``nu = mu = 0`` contribute nothing; ``nu > 0`` where ``mu = 0`` gives ``inf``.
    """
    u, iu, ju = union_values(nu.values, mu.values)
    a = np.zeros(len(u))
    b = np.zeros(len(u))
    a[iu] = nu.weights
    b[ju] = mu.weights
    return float(_chi2(a, b, np.ones(len(u))).sum())


def _chi2(a, b, w):
    out = np.zeros_like(a)
    pos = b > 0
    out[pos] = w[pos] * (a[pos] - b[pos]) ** 2 / b[pos]
    bad = ~pos & (a > ZERO_MASS)
    out[bad] = np.inf
    return out


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty weights and Frank-Wolfe controls.

    Args:
        r: Global or per-tuple penalty level; the weight of each tuple is ``1/r``.
        max_iter: Iteration cap.
        tol: Stop once the FW gap is at most ``tol * (1 + |value|)``.
        shrink: Backtracking factor.
        armijo: Sufficient-ascent constant.
        max_backtracks: Halvings tried before the step is declared blocked.
        stall_iter: Window for the stagnation stop; ``0`` disables it.
        stall_tol: The run stops (unconverged) when the objective gains less
            than ``stall_tol * (1 + |value|)`` over ``stall_iter`` iterations.
    """

    r: object = 1.0
    max_iter: int = 2000
    tol: float = 1e-5
    shrink: float = 0.5
    armijo: float = 1e-4
    max_backtracks: int = 60
    stall_iter: int = 100
    stall_tol: float = 1e-10

    def r_values(self, delta):
        rv = parse_r(self.r, delta)
        if any(v <= 0 for v in rv.values()):
            raise InputError("penalty levels r must be positive")
        return rv


class PenaltyOperator:
    """``pen(q) = sum_rows w (A_s q - A_t q)^2 / (A_t q)`` over all homogeneity tuples.

    Rows are the pairs ``(x, y)`` of each tuple with ``x`` on the meet support;
    ``A_s q`` is ``K_{s,s+tau}(x, y)`` and ``A_t q`` is ``K_{t,t+tau}(x, y)``
    for a coupling ``q`` with the prescribed marginals.  ``w = theta(x) / r``.
    """

    def __init__(self, spec: ProblemSpec, r_values: dict):
        shape = tuple(len(m) for m in spec.marginals)
        P = int(np.prod(shape, dtype=np.int64))
        idx = np.indices(shape).reshape(len(shape), -1)
        cols = np.arange(P)
        blocks_s, blocks_t, weights, owners = [], [], [], []
        self.tuples = []
        row0 = 0
        for tup in spec.delta:
            s, t = tup.i, tup.j
            x, theta, ws, wt, map_s, map_t = _meet_maps(spec, s, t)
            if len(x) == 0:
                continue
            grid = [m.values for m in spec.marginals]
            y, ys_map, yt_map = union_values(grid[s + tup.tau_i - 1], grid[t + tup.tau_j - 1])
            ny = len(y)
            mats = []
            for time, ytime, xmap, ymap, mu in ((s, s + tup.tau_i, map_s, ys_map, ws), (t, t + tup.tau_j, map_t, yt_map, wt)):
                cx = xmap[idx[time - 1]]
                m = cx >= 0
                rows = cx[m] * ny + ymap[idx[ytime - 1][m]]
                mats.append(sp.csr_matrix((1.0 / mu[cx[m]], (rows, cols[m])), shape=(len(x) * ny, P)))
            blocks_s.append(mats[0])
            blocks_t.append(mats[1])
            weights.append(np.repeat(theta / r_values[tup], ny))
            owners.append(np.full(len(x) * ny, len(self.tuples)))
            self.tuples.append(tup)
            row0 += len(x) * ny
        self.n_paths = P
        if blocks_s:
            self.A_s = sp.vstack(blocks_s, format="csr")
            self.A_t = sp.vstack(blocks_t, format="csr")
            self.w = np.concatenate(weights)
            self.owner = np.concatenate(owners)
        else:
            self.A_s = self.A_t = sp.csr_matrix((0, P))
            self.w = np.zeros(0)
            self.owner = np.zeros(0, dtype=int)

    def terms(self, q) -> np.ndarray:
        """Penalty per tuple (weighted by ``1/r``)."""
        vals = _chi2(self.A_s @ q, self.A_t @ q, self.w)
        return np.bincount(self.owner, weights=vals, minlength=len(self.tuples)) if len(vals) else np.zeros(0)

    def value(self, q) -> float:
        return float(_chi2(self.A_s @ q, self.A_t @ q, self.w).sum())

    def gradient(self, q) -> np.ndarray:
        """Gradient in the path weights; zero on rows where both kernels vanish."""
        a = self.A_s @ q
        b = self.A_t @ q
        pos = b > 0
        ga = np.zeros_like(a)
        gb = np.zeros_like(b)
        ga[pos] = 2.0 * self.w[pos] * (a[pos] - b[pos]) / b[pos]
        gb[pos] = self.w[pos] * (1.0 - (a[pos] / b[pos]) ** 2)
        return self.A_s.T @ ga + self.A_t.T @ gb

    def forbidden_paths(self, q) -> np.ndarray:
        """Paths that would put kernel mass where ``q`` has none on the reference side."""
        dead = (self.A_t @ q) <= ZERO_MASS
        if not dead.any():
            return np.zeros(self.n_paths, dtype=bool)
        hit = self.A_s[np.flatnonzero(dead)]
        return np.asarray(abs(hit).sum(axis=0)).ravel() > 0


def coupling_weights(coupling: Coupling, spec: ProblemSpec, tol: float = 1e-7) -> np.ndarray:
    """Path weights of ``coupling`` on the grid of ``spec`` (flat, C order).

    Raises:
        InputError: a time marginal differs from the prescribed one by more than ``tol``.
    """
    if coupling.n_times != len(spec.marginals):
        raise InputError(f"coupling has {coupling.n_times} times, problem has {len(spec.marginals)}")
    sel = []
    for t, mu in enumerate(spec.marginals):
        w = coupling.marginal_weights(t + 1)
        i, j = match_atoms(mu.values, coupling.values[t])
        mass = np.zeros(len(mu))
        mass[i] = w[j]
        extra = np.delete(w, j)
        err = max(float(np.max(np.abs(mass - mu.weights))), float(extra.max()) if extra.size else 0.0)
        if err > tol or len(i) != len(mu):
            raise InputError(f"time-{t + 1} marginal differs from the prescribed one by {err:.3g}")
        sel.append(j)
    return coupling._tensor[np.ix_(*sel)].reshape(-1).copy()


def pen_objective(coupling: Coupling, spec: ProblemSpec, config: PenaltyConfig | None = None, sense: str = "sup") -> float:
    """``E[f] - penalty`` (``E[f] + penalty`` for ``sense="inf"``); ``-inf``/``+inf`` when a kernel is singular."""
    config = config or PenaltyConfig(r=spec.r if spec.r is not None else 1.0)
    q = coupling_weights(coupling, spec)
    op = PenaltyOperator(spec, config.r_values(spec.delta))
    pay = _payoff_vector(spec)
    sign = 1.0 if sense == "sup" else -1.0
    return float(pay @ q) - sign * op.value(q)


def _payoff_vector(spec: ProblemSpec) -> np.ndarray:
    shape = tuple(len(m) for m in spec.marginals)
    idx = np.indices(shape).reshape(len(shape), -1)
    paths = np.column_stack([spec.marginals[t].values[idx[t]] for t in range(len(shape))])
    return np.asarray(spec.payoff.evaluate(paths), dtype=float)


@dataclass
class PenResult:
    sense: str
    value: float
    expectation: float
    penalty: float
    q: np.ndarray
    coupling: Coupling
    fw_gap: float
    iterations: int
    converged: bool
    start: str
    trace: list = field(default_factory=list)
    stalled: bool = False

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for row in self.trace:
                w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def _max_support_point(model: LPModel, fixed_zero: np.ndarray, backend: str):
    """A feasible point positive on every column that some feasible point charges.

    Solves ``max sum z`` over ``A q' = lam b``, ``0 <= z <= min(q', 1)``,
    ``lam >= 0``; an average of points in the cone scales to ``z = 1`` on the
    whole achievable support, and ``q'/lam`` is feasible.
    """
    m, n = model.A.shape
    b = LPBuilder(2 * n + 1)
    A = model.A.tocoo()
    rows = np.concatenate([A.row, np.arange(m)])
    cols = np.concatenate([A.col, np.full(m, 2 * n)])
    vals = np.concatenate([A.data, -model.rhs])
    b.add_rows("scaled", m, rows, cols, vals, EQ, 0.0)
    r = np.arange(n)
    b.add_rows("cap", n, np.concatenate([r, r]), np.concatenate([n + r, r]),
               np.concatenate([np.ones(n), -np.ones(n)]), LE, 0.0)
    ub = np.concatenate([np.where(fixed_zero, 0.0, np.inf), np.where(fixed_zero, 0.0, 1.0), [np.inf]])
    c = np.concatenate([np.zeros(n), np.ones(n), [0.0]])
    hom = b.build(c, "max", "support")
    hom = replace(hom, ub=ub)
    sol = solve(hom, backend)
    if not sol.optimal or sol.x[2 * n] <= 0:
        return None
    q = np.clip(sol.x[:n] / sol.x[2 * n], 0.0, None)
    return q / q.sum()


def solve_pen_hmot(spec: ProblemSpec, config: PenaltyConfig | None = None, sense: str | None = None) -> PenResult:
    """Frank-Wolfe on the Gini-penalized transport problem.

    Starts near the homogeneous optimizer when one exists (mixed with a
    maximal-support martingale coupling so every later step keeps the
    penalty finite), otherwise at the maximal-support coupling itself.

    Args:
        spec: The problem; its mode is ignored, the martingale polytope is used.
        config: Penalty levels and iteration controls (``r`` defaults to ``spec.r``).
        sense: ``"sup"`` maximizes ``E[f] - pen``, ``"inf"`` minimizes ``E[f] + pen``.

    Raises:
        InfeasibleError: no coupling with finite penalty exists.
    """
    if config is None:
        config = PenaltyConfig(r=spec.r if spec.r is not None else 1.0)
    sense = sense or (spec.sense if spec.sense != "both" else "sup")
    sign = 1.0 if sense == "sup" else -1.0
    backend = spec.solver.backend
    op = PenaltyOperator(spec, config.r_values(spec.delta))
    mot = build_primal(spec.replace(mode=Mode.MOT, sense=sense), names=False)
    model = mot.model
    pay = mot.payoff

    # drop paths that force infinite penalty on every martingale coupling
    fixed = np.zeros(model.n_cols, dtype=bool)
    anchor = None
    for _ in range(model.n_cols + 1):
        anchor = _max_support_point(model, fixed, backend)
        if anchor is None:
            raise InfeasibleError(
                "no martingale coupling has a finite homogeneity penalty; "
                "run a homogeneity feasibility diagnosis (hmot bounds --mode hmot)"
            )
        new = op.forbidden_paths(anchor) & ~fixed
        if not new.any():
            break
        fixed |= new
    oracle_model = replace(model, ub=np.where(fixed, 0.0, model.ub))

    def phi(q):
        return sign * float(pay @ q) - op.value(q)

    start = "max-support"
    q = anchor
    hom = build_primal(spec.replace(mode=Mode.HMOT, sense=sense), names=False)
    hsol = solve(hom.model.with_objective(hom.model.c, "max" if sense == "sup" else "min"), backend)
    if hsol.optimal:
        qh = np.clip(hsol.x, 0.0, None)
        qh /= qh.sum()
        base = abs(phi(qh))
        pen_anchor = op.value(anchor)
        eps = 1e-2 if pen_anchor <= 0 else min(1e-2, 1e-7 * (1.0 + base) / pen_anchor)
        q = (1.0 - eps) * qh + eps * anchor
        start = "homogeneous"
    if not np.isfinite(phi(q)):
        raise InfeasibleError("starting coupling has infinite penalty")

    if backend == "simplex":
        def oracle(g):
            return solve(oracle_model.with_objective(g, "max"), "simplex").x
    else:
        session = HighsSession(oracle_model, method="simplex")

        def oracle(g):
            sol = session.solve(g, "max")
            if not sol.optimal:
                raise InfeasibleError(f"linear oracle ended with status {sol.status}")
            return sol.x

    trace = []
    f_cur = phi(q)
    gap = np.inf
    converged = stalled = False
    k = 0
    for k in range(config.max_iter):
        grad = sign * pay - op.gradient(q)
        # the argmax is scale free; unit costs keep the oracle well conditioned
        v = oracle(grad / max(float(np.abs(grad).max()), 1e-300))
        d = v - q
        gap = float(grad @ d)
        if gap <= config.tol * (1.0 + abs(f_cur)):
            trace.append((k, sign * f_cur, gap, 0.0))
            converged = True
            break
        step, f_new = _armijo(phi, q, d, f_cur, gap, 2.0 / (k + 2.0), config)
        if step == 0.0:
            # blocked towards the vertex: aim at its midpoint with the anchor instead
            d = 0.5 * (v + anchor) - q
            g2 = float(grad @ d)
            if g2 > 0:
                step, f_new = _armijo(phi, q, d, f_cur, g2, 2.0 / (k + 2.0), config)
        trace.append((k, sign * f_cur, gap, step))
        if step == 0.0:
            log.warning("Frank-Wolfe line search blocked at iteration %d (gap %.3g)", k, gap)
            break
        q = q + step * d
        f_cur = f_new
        w = config.stall_iter
        if w and k >= w and f_cur - trace[k - w][1] * sign <= config.stall_tol * (1.0 + abs(f_cur)):
            stalled = True
            break
    q = np.clip(q, 0.0, None)
    q /= q.sum()
    expectation = float(pay @ q)
    penalty = op.value(q)
    coupling = Coupling(mot.grids, q, tol=1e-6)
    return PenResult(
        sense, expectation - sign * penalty, expectation, penalty, q, coupling,
        gap, k + 1, converged, start, trace, stalled,
    )


def _armijo(phi, q, d, f0, gap, step, config):
    for _ in range(config.max_backtracks):
        f = phi(q + step * d)
        if np.isfinite(f) and f >= f0 + config.armijo * step * gap:
            return step, f
        step *= config.shrink
    return 0.0, f0


# ---------------------------------------------------------------------------
# weak duality with transaction costs


def transaction_cost(portfolio: HedgePortfolio, r_values: dict, idx: np.ndarray) -> np.ndarray:
    """Quadratic swap costs ``sum (r/4) g(S_t, S_{t+tau})^2 dtheta/dmu_t(S_t)`` on grid paths."""
    out = np.zeros(idx.shape[1])
    for gt in portfolio.g:
        if gt.z is not None:
            raise InputError("transaction costs are defined for one-step swaps only")
        (t, ty) = gt.times[1]
        cx = _lookup(gt.x, portfolio.grids[t - 1])[idx[t - 1]]
        m = cx >= 0
        cy = _lookup(gt.y, portfolio.grids[ty - 1])[idx[ty - 1][m]]
        out[m] += 0.25 * r_values[gt.tuple] * gt.values[cx[m], cy] ** 2 * gt.dens_t[cx[m]]
    return out


@dataclass
class PenDualReport:
    cost: float
    min_slack: float
    feasible: bool


def pen_dual_bound(portfolio: HedgePortfolio, spec: ProblemSpec, r, tol: float = 1e-9) -> PenDualReport:
    """Check the transaction-cost hedging inequality on every path and price the portfolio.

    When ``feasible`` the cost bounds the penalized value from above (sup) or
    below (inf).
    """
    from .hedging import portfolio_cost

    rv = parse_r(r, spec.delta)
    shape = portfolio.shape
    idx = np.indices(shape).reshape(len(shape), -1)
    slack = hedge_slack(portfolio, spec, idx) - transaction_cost(portfolio, rv, idx)
    ms = float(slack.min())
    return PenDualReport(portfolio_cost(portfolio, spec.marginals), ms, ms >= -tol)
