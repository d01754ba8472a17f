"""Transport linear programs over path-space couplings.

The unknown is a probability ``q`` on the product grid of the marginal
supports (one LP column per path).  Constraint families:

* ``marginal``: the time-``t`` projection of ``q`` is ``mu_t``;
* ``martingale``: for every history prefix, the conditional mean of the next
  step equals the current value (or, with ``pairwise``, only per ``(t, x_t)``);
* ``homogeneity``: forward kernels agree on the meet of two marginals,
  written division-free as ``mu_t(x) p_s(x, y) - mu_s(x) p_t(x, y) = 0``;
* ``homogeneity2``: the same on two-step kernels;
* relaxed variants bounding a TV or W1 distance between kernels by ``r``.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .exceptions import DomainError, InputError, ScaleLimitError
from .lp import LPBuilder, LPModel, LPSolution, SimplexOptions, solve
from .lp.model import EQ, LE
from .measures import DiscreteMeasure, FiniteMeasure, match_atoms, meet, same_value
from .problem import DeltaSet, HomTuple, Metric, Mode, ProblemSpec, build_delta, order2_pairs

log = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# couplings


def union_values(a: np.ndarray, b: np.ndarray):
    """Merged sorted grid of ``a`` and ``b`` plus index maps from each input into it."""
    allv = np.concatenate([a, b])
    order = np.argsort(allv, kind="stable")
    u = []
    pos = np.empty(len(allv), dtype=int)
    for k in order:
        v = allv[k]
        if not (u and same_value(u[-1], v)):
            u.append(v)
        pos[k] = len(u) - 1
    return np.asarray(u, dtype=float), pos[: len(a)], pos[len(a):]


class Coupling:
    """A law on the product grid ``values[0] x ... x values[N-1]``.

    Args:
        values: Per-time increasing atom values.
        weights: Path probabilities, flat in C order or shaped like the grid.
        tol: Tolerance on nonnegativity and total mass.
    """

    def __init__(self, values, weights, tol: float = 1e-9):
        self.values = tuple(np.asarray(v, dtype=float) for v in values)
        self.shape = tuple(len(v) for v in self.values)
        w = np.asarray(weights, dtype=float).reshape(-1)
        if w.size != int(np.prod(self.shape)):
            raise InputError(f"{w.size} weights for a grid of shape {self.shape}")
        if np.any(w < -tol) or abs(w.sum() - 1.0) > tol:
            raise InputError("coupling weights must be nonnegative and sum to 1")
        self.weights = np.clip(w, 0.0, None)
        self._tensor = self.weights.reshape(self.shape)

    @classmethod
    def from_paths(cls, paths, weights, tol: float = 1e-9) -> "Coupling":
        """Aggregate a list of ``(path, weight)`` rows onto their product grid."""
        paths = np.atleast_2d(np.asarray(paths, dtype=float))
        weights = np.asarray(weights, dtype=float)
        grids, idx = [], []
        for t in range(paths.shape[1]):
            u, pos, _ = union_values(paths[:, t], np.empty(0))
            grids.append(u)
            idx.append(pos)
        shape = tuple(len(g) for g in grids)
        flat = np.ravel_multi_index(tuple(idx), shape)
        w = np.bincount(flat, weights=weights, minlength=int(np.prod(shape)))
        return cls(grids, w, tol)

    @property
    def n_times(self) -> int:
        return len(self.values)

    def paths(self) -> np.ndarray:
        idx = np.indices(self.shape).reshape(self.n_times, -1)
        return np.column_stack([self.values[t][idx[t]] for t in range(self.n_times)])

    def marginal_weights(self, t: int) -> np.ndarray:
        """Time-``t`` (1-based) marginal over the full time-``t`` grid, zeros included."""
        self._check_time(t)
        axes = tuple(a for a in range(self.n_times) if a != t - 1)
        return self._tensor.sum(axis=axes)

    def marginal(self, t: int) -> DiscreteMeasure:
        w = self.marginal_weights(t)
        keep = w > 0
        return DiscreteMeasure.from_atoms(self.values[t - 1][keep], w[keep], normalize=True)

    def pair_marginal(self, a: int, b: int) -> np.ndarray:
        return pair_marginal(self, a, b)

    def kernel(self, a: int, b: int) -> np.ndarray:
        """Row-normalized pair marginal; rows of null states are zero."""
        p = pair_marginal(self, a, b)
        mass = p.sum(axis=1, keepdims=True)
        return np.divide(p, mass, out=np.zeros_like(p), where=mass > 0)

    def _check_time(self, t):
        if not 1 <= t <= self.n_times:
            raise InputError(f"time index {t} outside 1..{self.n_times}")

    def to_csv(self, path, include_zero: bool = False) -> None:
        """One row per path: ``x1,...,xN,weight``."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([f"x{t + 1}" for t in range(self.n_times)] + ["weight"])
            for row, q in zip(self.paths(), self.weights):
                if q > 0 or include_zero:
                    w.writerow([repr(float(v)) for v in row] + [repr(float(q))])

    @classmethod
    def read_csv(cls, path, tol: float = 1e-9) -> "Coupling":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0][-1].strip() != "weight" or len(rows[0]) < 2:
            raise InputError(f"{path}: header must be x1,...,xN,weight")
        try:
            data = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
        except ValueError as exc:
            raise InputError(f"{path}: non-numeric entry ({exc})") from exc
        if data.ndim != 2 or data.shape[1] != len(rows[0]):
            raise InputError(f"{path}: ragged rows")
        return cls.from_paths(data[:, :-1], data[:, -1], tol)


def pair_marginal(coupling: Coupling, a: int, b: int) -> np.ndarray:
    """Joint law of ``(S_a, S_b)`` as a matrix over the time-``a`` x time-``b`` grids."""
    n = coupling.n_times
    if not (1 <= a < b <= n):
        raise InputError(f"need 1 <= a < b <= {n}, got a={a}, b={b}")
    axes = tuple(t for t in range(n) if t not in (a - 1, b - 1))
    return coupling._tensor.sum(axis=axes)


def _kernel_rows(coupling: Coupling, a: int, b: int, x: float, grid_y: np.ndarray):
    """Kernel row ``K_{a,b}(x, .)`` expressed on ``grid_y`` (a superset of the time-``b`` grid)."""
    i, _ = match_atoms(coupling.values[a - 1], np.array([x]))
    if len(i) == 0:
        return None
    p = pair_marginal(coupling, a, b)[i[0]]
    mass = p.sum()
    if mass <= 0:
        return None
    _, jb = match_atoms(grid_y, coupling.values[b - 1])
    ia, _ = match_atoms(grid_y, coupling.values[b - 1])
    row = np.zeros(len(grid_y))
    row[ia] = p[jb] / mass
    return row


# ---------------------------------------------------------------------------
# homogeneity checks and pricing rules


@dataclass(frozen=True)
class Violation:
    tuple: HomTuple
    state: float
    tv: float
    meet_mass: float
    row_s: tuple
    row_t: tuple


@dataclass
class HomogeneityReport:
    passed: bool
    violations: list = field(default_factory=list)
    max_tv: float = 0.0
    tol: float = 0.0

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "tol": self.tol,
            "max_tv": self.max_tv,
            "violations": [
                {
                    "tuple": list(v.tuple), "state": v.state, "tv": v.tv, "meet_mass": v.meet_mass,
                    "kernel_s": list(v.row_s), "kernel_t": list(v.row_t),
                }
                for v in self.violations
            ],
        }


def check_homogeneous(coupling: Coupling, delta: DeltaSet | None = None, tol: float = 1e-7) -> HomogeneityReport:
    """Compare kernel rows ``K_{i,i+tau_i}(x, .)`` and ``K_{j,j+tau_j}(x, .)`` on the meet support.

    The discrepancy is the full l1 distance (no one-half factor).
    """
    if delta is None:
        delta = build_delta(_uniform_grid(coupling.n_times))
    violations = []
    max_tv = 0.0
    for tup in delta:
        s, t = tup.i, tup.j
        ys, yt = s + tup.tau_i, t + tup.tau_j
        if max(ys, yt) > coupling.n_times:
            raise InputError(f"tuple {tup} exceeds the coupling's {coupling.n_times} time points")
        th = meet(coupling.marginal(s), coupling.marginal(t))
        grid_y, _, _ = union_values(coupling.values[ys - 1], coupling.values[yt - 1])
        for x, mass in zip(th.values, th.weights):
            ks = _kernel_rows(coupling, s, ys, x, grid_y)
            kt = _kernel_rows(coupling, t, yt, x, grid_y)
            tv = float(np.abs(ks - kt).sum())
            max_tv = max(max_tv, tv)
            if tv > tol:
                violations.append(Violation(tup, float(x), tv, float(mass), tuple(ks), tuple(kt)))
    return HomogeneityReport(not violations, violations, max_tv, tol)


def _uniform_grid(n):
    from .problem import TimeGrid

    return TimeGrid.uniform(n)


def pricing_rule(coupling: Coupling, s: int, tau: int, k: float, x: float) -> float:
    """Forward call price ``sum_y (y - k)^+ K_{s,s+tau}(x, y)`` seen from state ``x`` at time ``s``."""
    if tau < 1 or s + tau > coupling.n_times:
        raise InputError(f"s + tau = {s + tau} outside 1..{coupling.n_times}")
    grid_y = coupling.values[s + tau - 1]
    row = _kernel_rows(coupling, s, s + tau, x, grid_y)
    if row is None:
        raise DomainError(f"state {x} is not in the support of the time-{s} marginal")
    return float(np.maximum(grid_y - k, 0.0) @ row)


# ---------------------------------------------------------------------------
# LP construction


@dataclass
class HomBlock:
    """Rows of one homogeneity tuple: states ``x`` (meet support) times targets ``y``."""

    tuple: HomTuple
    x: np.ndarray
    theta: np.ndarray
    mu_s: np.ndarray
    mu_t: np.ndarray
    y: np.ndarray
    rows: slice
    # two-step blocks carry the second target grid and the partner tuple
    z: np.ndarray | None = None
    partner: HomTuple | None = None

    def row_index(self, cx, cy, cz=None):
        width = len(self.y) * (len(self.z) if self.z is not None else 1)
        off = cx * width + (cy * len(self.z) + cz if self.z is not None else cy)
        return self.rows.start + off


@dataclass
class PrimalLP:
    """An :class:`LPModel` together with the maps from row families back to the problem."""

    model: LPModel
    spec: ProblemSpec
    grids: tuple
    weights: tuple
    payoff: np.ndarray
    marginal_rows: list
    martingale_rows: list
    hom_blocks: list
    hom2_blocks: list
    n_paths: int
    relaxed: dict = field(default_factory=dict)

    @property
    def shape(self):
        return tuple(len(g) for g in self.grids)

    def path_index(self) -> np.ndarray:
        return np.indices(self.shape).reshape(len(self.shape), -1)

    def coupling(self, x: np.ndarray) -> Coupling:
        q = np.clip(np.asarray(x[: self.n_paths], dtype=float), 0.0, None)
        return Coupling(self.grids, q / q.sum(), tol=1e-6)


def _cap(spec: ProblemSpec, max_vars):
    return spec.solver.max_vars if max_vars is None else max_vars


def build_primal(spec: ProblemSpec, max_vars: int | None = None, names: bool = True) -> PrimalLP:
    """Assemble the transport LP for ``spec`` (objective sense follows ``spec.sense``).

    Args:
        spec: The problem.
        max_vars: Override of the variable cap; ``0`` disables it.
        names: Emit row/column names (needed for export).

    Raises:
        ScaleLimitError: more path variables than the cap.
    """
    grids = tuple(m.values for m in spec.marginals)
    weights = tuple(m.weights for m in spec.marginals)
    shape = tuple(len(g) for g in grids)
    n = len(shape)
    P = int(np.prod(shape, dtype=np.int64))
    cap = _cap(spec, max_vars)
    if cap and P > cap:
        raise ScaleLimitError(
            f"{P} path variables exceed the cap of {cap}; export the model instead "
            "(hmot export) or raise HMOT_MAX_VARS",
            P, cap,
        )
    idx = np.indices(shape).reshape(n, -1)
    vals = [grids[t][idx[t]] for t in range(n)]
    pay = np.asarray(spec.payoff.evaluate(np.column_stack(vals)), dtype=float)
    cols = np.arange(P)
    col_names = None
    if names:
        parts = [np.char.add("_", (idx[t] + 1).astype(str)) for t in range(n)]
        joined = parts[0]
        for p in parts[1:]:
            joined = np.char.add(joined, p)
        col_names = list(np.char.add("q", joined))
    b = LPBuilder(P, col_names)

    marginal_rows = []
    for t in range(n):
        sl = b.add_rows(
            "marginal", shape[t], idx[t], cols, np.ones(P), EQ, weights[t],
            [f"m_t{t + 1}_a{a + 1}" for a in range(shape[t])] if names else None,
        )
        marginal_rows.append(np.arange(sl.start, sl.stop))

    martingale_rows = []
    if spec.mode.martingale:
        for t in range(n - 1):
            step = vals[t + 1] - vals[t]
            if spec.pairwise:
                local, count = idx[t], shape[t]
            else:
                local = np.ravel_multi_index(tuple(idx[: t + 1]), shape[: t + 1])
                count = int(np.prod(shape[: t + 1]))
            nz = step != 0
            sl = b.add_rows(
                "martingale", count, local[nz], cols[nz], step[nz], EQ, 0.0,
                [f"g_t{t + 1}_h{h + 1}" for h in range(count)] if names else None,
            )
            martingale_rows.append(sl)

    hom_blocks, hom2_blocks = [], []
    relaxed = {}
    delta = spec.delta
    if spec.mode in (Mode.HMOT, Mode.HMOT2, Mode.RHMOT):
        active = 0
        rvals = spec.r_values if spec.mode is Mode.RHMOT else {}
        for tup in delta:
            rows, ccols, coef, blk = _hom_terms(tup, spec, idx, b.n_rows)
            if blk is None:
                continue
            active += 1
            if spec.mode is Mode.RHMOT:
                relaxed[tup] = _add_relaxed(b, tup, blk, rows, ccols, coef, spec.metric, rvals[tup], names)
            else:
                nrows = len(blk.x) * len(blk.y)
                b.add_rows(
                    "homogeneity", nrows, rows - blk.rows.start, ccols, coef, EQ, 0.0,
                    _hom_names(blk) if names else None,
                )
            hom_blocks.append(blk)
        if active == 0 and len(delta):
            warnings.warn("homogeneity vacuous: every meet measure is zero", stacklevel=2)
        if spec.mode is Mode.HMOT2:
            for t1, t2 in order2_pairs(delta):
                rows, ccols, coef, blk = _hom2_terms(t1, t2, spec, idx, b.n_rows)
                if blk is None:
                    continue
                nrows = len(blk.x) * len(blk.y) * len(blk.z)
                b.add_rows(
                    "homogeneity2", nrows, rows - blk.rows.start, ccols, coef, EQ, 0.0,
                    _hom_names(blk) if names else None,
                )
                hom2_blocks.append(blk)

    sense = "max" if spec.sense == "sup" else "min"
    model = b.build(pay, sense=sense, name=f"{spec.mode.value}")
    return PrimalLP(
        model, spec, grids, weights, pay, marginal_rows, martingale_rows,
        hom_blocks, hom2_blocks, P, relaxed,
    )


def _hom_names(blk: HomBlock):
    tag = "_".join(str(v) for v in blk.tuple)
    if blk.z is None:
        return [f"h_{tag}_x{a + 1}_y{c + 1}" for a in range(len(blk.x)) for c in range(len(blk.y))]
    tag += "_" + "_".join(str(v) for v in blk.partner)
    return [
        f"hh_{tag}_x{a + 1}_y{c + 1}_z{d + 1}"
        for a in range(len(blk.x)) for c in range(len(blk.y)) for d in range(len(blk.z))
    ]


def _meet_maps(spec, s, t):
    mu_s, mu_t = spec.marginals[s - 1], spec.marginals[t - 1]
    i_s, i_t = match_atoms(mu_s.values, mu_t.values)
    theta = np.minimum(mu_s.weights[i_s], mu_t.weights[i_t])
    map_s = np.full(len(mu_s), -1)
    map_t = np.full(len(mu_t), -1)
    map_s[i_s] = np.arange(len(i_s))
    map_t[i_t] = np.arange(len(i_t))
    return mu_s.values[i_s], theta, mu_s.weights[i_s], mu_t.weights[i_t], map_s, map_t


def _hom_terms(tup: HomTuple, spec, idx, row0):
    """COO triplets (absolute rows) of the division-free homogeneity rows of one tuple."""
    s, t = tup.i, tup.j
    sy, ty = s + tup.tau_i, t + tup.tau_j
    x, theta, ws, wt, map_s, map_t = _meet_maps(spec, s, t)
    if len(x) == 0:
        return None, None, None, None
    grid = [m.values for m in spec.marginals]
    y, ys_map, yt_map = union_values(grid[sy - 1], grid[ty - 1])
    ny = len(y)
    blk = HomBlock(tup, x, theta, ws, wt, y, slice(row0, row0 + len(x) * ny))
    P = idx.shape[1]
    cols = np.arange(P)
    out_r, out_c, out_v = [], [], []
    # + mu_t(x) on paths with S_s = x, - mu_s(x) on paths with S_t = x
    for time, ytime, xmap, ymap, coef in (
        (s, sy, map_s, ys_map, wt), (t, ty, map_t, yt_map, -ws),
    ):
        cx = xmap[idx[time - 1]]
        m = cx >= 0
        cy = ymap[idx[ytime - 1][m]]
        out_r.append(row0 + cx[m] * ny + cy)
        out_c.append(cols[m])
        out_v.append(coef[cx[m]])
    return np.concatenate(out_r), np.concatenate(out_c), np.concatenate(out_v), blk


def _hom2_terms(t1: HomTuple, t2: HomTuple, spec, idx, row0):
    s, t = t1.i, t1.j
    x, theta, ws, wt, map_s, map_t = _meet_maps(spec, s, t)
    if len(x) == 0:
        return None, None, None, None
    grid = [m.values for m in spec.marginals]
    y, ys1, yt1 = union_values(grid[s + t1.tau_i - 1], grid[t + t1.tau_j - 1])
    z, zs2, zt2 = union_values(grid[s + t2.tau_i - 1], grid[t + t2.tau_j - 1])
    ny, nz = len(y), len(z)
    blk = HomBlock(t1, x, theta, ws, wt, y, slice(row0, row0 + len(x) * ny * nz), z=z, partner=t2)
    cols = np.arange(idx.shape[1])
    out_r, out_c, out_v = [], [], []
    for time, a, c, xmap, ymap, zmap, coef in (
        (s, s + t1.tau_i, s + t2.tau_i, map_s, ys1, zs2, wt),
        (t, t + t1.tau_j, t + t2.tau_j, map_t, yt1, zt2, -ws),
    ):
        cx = xmap[idx[time - 1]]
        m = cx >= 0
        cy = ymap[idx[a - 1][m]]
        cz = zmap[idx[c - 1][m]]
        out_r.append(row0 + (cx[m] * ny + cy) * nz + cz)
        out_c.append(cols[m])
        out_v.append(coef[cx[m]])
    return np.concatenate(out_r), np.concatenate(out_c), np.concatenate(out_v), blk


def _add_relaxed(b: LPBuilder, tup, blk: HomBlock, rows, cols, coef, metric, r, names):
    """Distance rows ``D(theta x K_s, theta x K_t) <= r`` for one tuple.

    ``d(x, y) = theta/mu_s p_s - theta/mu_t p_t`` is the homogeneity row scaled
    by ``theta / (mu_s mu_t)``.  TV bounds ``sum |d|``; W1 bounds
    ``sum_x sum_k gap_k |sum_{y <= y_k} d(x, y)|``.
    """
    ny = len(blk.y)
    local = rows - blk.rows.start
    cx = local // ny
    scale = blk.theta / (blk.mu_s * blk.mu_t)
    vals = coef * scale[cx]
    tag = "_".join(str(v) for v in tup)
    if metric is Metric.TV:
        n_aux = len(blk.x) * ny
        D = sp.csr_matrix((vals, (local, cols)), shape=(n_aux, b.n_cols))
        weights_aux = np.ones(n_aux)
        aux_names = [f"e_{tag}_x{a + 1}_y{c + 1}" for a in range(len(blk.x)) for c in range(ny)]
    else:
        n_aux = len(blk.x) * (ny - 1)
        D0 = sp.csr_matrix((vals, (local, cols)), shape=(len(blk.x) * ny, b.n_cols))
        cum = sp.kron(sp.eye(len(blk.x)), sp.csr_matrix(np.tril(np.ones((ny - 1, ny)))), format="csr")
        D = (cum @ D0).tocsr()
        weights_aux = np.tile(np.diff(blk.y), len(blk.x))
        aux_names = [f"w_{tag}_x{a + 1}_k{c + 1}" for a in range(len(blk.x)) for c in range(ny - 1)]
    aux = b.add_columns(n_aux, 0.0, np.inf, ["a" + n for n in aux_names] if names else None)
    D = sp.csr_matrix((D.data, D.indices, D.indptr), shape=(n_aux, b.n_cols))
    Dc = D.tocoo()
    ar = np.arange(n_aux)
    out = {"aux": aux, "r": r}
    for sign, fam in ((1.0, "pos"), (-1.0, "neg")):
        out[fam] = b.add_rows(
            f"dist_{fam}:{tag}", n_aux,
            np.concatenate([Dc.row, ar]), np.concatenate([Dc.col, aux]),
            np.concatenate([sign * Dc.data, -np.ones(n_aux)]), LE, 0.0,
            [f"{fam[0]}{n}" for n in aux_names] if names else None,
        )
    budget = b.add_rows(
        f"dist_budget:{tag}", 1, np.zeros(n_aux, dtype=int), aux, weights_aux, LE, r,
        [f"r_{tag}"] if names else None,
    )
    out["budget_row"] = budget.start
    return out


def add_r_homogeneity(primal: PrimalLP, metric: Metric | str, r) -> PrimalLP:
    """Replace the homogeneity equalities of ``primal`` by distance budgets ``r``."""
    spec = primal.spec.replace(mode=Mode.RHMOT, metric=Metric(metric), r=r)
    return build_primal(spec, max_vars=0, names=True)


# ---------------------------------------------------------------------------
# bounds


@dataclass
class SenseResult:
    sense: str
    status: str
    value: float | None
    solution: LPSolution
    coupling: Coupling | None = None


@dataclass
class BoundsResult:
    primal: PrimalLP
    results: dict
    diagnosis: dict | None = None

    @property
    def inf(self) -> float | None:
        r = self.results.get("inf")
        return r.value if r else None

    @property
    def sup(self) -> float | None:
        r = self.results.get("sup")
        return r.value if r else None

    @property
    def status(self) -> str:
        statuses = {r.status for r in self.results.values()}
        return statuses.pop() if len(statuses) == 1 else ",".join(sorted(statuses))

    @property
    def duality_gaps(self) -> dict:
        return {k: r.solution.duality_gap for k, r in self.results.items()}


def solve_primal(primal: PrimalLP, sense: str, backend=None, options=None) -> LPSolution:
    spec = primal.spec
    model = primal.model.with_objective(primal.model.c, "max" if sense == "sup" else "min")
    opts = options or SimplexOptions(max_iter=spec.solver.max_iter, feas_tol=spec.solver.feas_tol)
    return solve(model, backend or spec.solver.backend, opts, spec.solver.simplex_max_cols)


def bounds(spec: ProblemSpec, backend: str | None = None, primal: PrimalLP | None = None) -> BoundsResult:
    """Lowest and highest model price of the payoff over the feasible couplings.

    Returns the optimal values, optimizing couplings and LP solutions (with
    duals for hedging) per requested sense.  On infeasibility the result
    carries a diagnosis naming the responsible constraint family.
    """
    primal = primal or build_primal(spec)
    results = {}
    diagnosis = None
    for sense in spec.senses():
        sol = solve_primal(primal, sense, backend)
        value = sol.objective if sol.optimal else None
        coupling = primal.coupling(sol.x) if sol.optimal else None
        results[sense] = SenseResult(sense, sol.status, value, sol, coupling)
        if sol.status == "infeasible" and diagnosis is None:
            diagnosis = diagnose_infeasibility(primal, sol)
    return BoundsResult(primal, results, diagnosis)


def diagnose_infeasibility(primal: PrimalLP, solution: LPSolution | None = None) -> dict:
    """Name the constraint families that make the LP infeasible.

    Uses the phase-1 certificate rows when the internal solver produced them;
    otherwise re-solves with families removed, most specific first.
    """
    fam = primal.model.families
    out = {"certificate_families": {}, "culprit": None}
    if solution is not None and solution.infeasible_rows is not None:
        for name, sl in fam.items():
            k = int(np.sum((solution.infeasible_rows >= sl.start) & (solution.infeasible_rows < sl.stop)))
            if k:
                out["certificate_families"][name] = k
    spec = primal.spec
    for mode, culprit in ((Mode.MOT, "homogeneity"), (Mode.OT, "martingale")):
        if spec.mode is mode or (mode is Mode.MOT and not spec.mode.martingale):
            continue
        relaxed = build_primal(spec.replace(mode=mode, sense="sup", check_convex_order=False), max_vars=0, names=False)
        sol = solve(relaxed.model, spec.solver.backend, None, spec.solver.simplex_max_cols)
        if sol.status != "infeasible":
            out["culprit"] = culprit
            break
    else:
        out["culprit"] = "marginal"
    return out


# ---------------------------------------------------------------------------
# feasibility of homogeneous couplings


@dataclass
class FeasibilityResult:
    feasible: bool | None
    method: str
    states: np.ndarray | None = None
    targets: np.ndarray | None = None
    kernel: np.ndarray | None = None
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "feasible": self.feasible,
            "method": self.method,
            "message": self.message,
            "states": None if self.states is None else self.states.tolist(),
            "targets": None if self.targets is None else self.targets.tolist(),
            "kernel": None if self.kernel is None else self.kernel.tolist(),
        }


def feasibility_hom(marginals, martingale: bool = False, max_vars: int = 200_000, backend: str = "auto") -> FeasibilityResult:
    """Decide whether a homogeneous (martingale) coupling of ``marginals`` exists.

    Poses the existence of one transition kernel ``K`` with ``mu_t K = mu_{t+1}``
    for every ``t`` (and ``sum_y y K(x, y) = x`` when ``martingale``) as a small
    LP; the Markov chain started in ``mu_1`` with kernel ``K`` is then a
    witness.  When the kernel LP fails in martingale mode the full path-space
    LP is tried as a fallback, within the variable cap.
    """
    marginals = list(marginals)
    if len(marginals) < 2:
        raise InputError("need at least two marginals")
    states = marginals[0].values
    for m in marginals[1:-1]:
        states, _, _ = union_values(states, m.values)
    targets = marginals[1].values
    for m in marginals[2:]:
        targets, _, _ = union_values(targets, m.values)
    nx, ny = len(states), len(targets)
    b = LPBuilder(nx * ny)
    var = np.arange(nx * ny).reshape(nx, ny)
    # rows of K sum to one on every state
    b.add_rows("kernel_rows", nx, np.repeat(np.arange(nx), ny), var.ravel(), np.ones(nx * ny), EQ, 1.0)
    if martingale:
        b.add_rows(
            "kernel_mean", nx, np.repeat(np.arange(nx), ny), var.ravel(),
            np.tile(targets, nx) - np.repeat(states, ny), EQ, 0.0,
        )
    for t in range(len(marginals) - 1):
        mu, nu = marginals[t], marginals[t + 1]
        im, ix = match_atoms(mu.values, states)
        iy, jy = match_atoms(targets, nu.values)
        rhs = np.zeros(ny)
        rhs[iy] = nu.weights[jy]
        r = np.tile(np.arange(ny), len(ix))
        c = var[ix].ravel()
        v = np.repeat(mu.weights[im], ny)
        b.add_rows(f"transport_{t + 1}", ny, r, c, v, EQ, rhs)
    model = b.build(np.zeros(nx * ny), "min", "kernel")
    sol = solve(model, backend)
    if sol.optimal:
        K = sol.x.reshape(nx, ny)
        return FeasibilityResult(True, "kernel-lp", states, targets, K, "single kernel found")
    if sol.status != "infeasible":
        raise InputError(f"kernel LP ended with status {sol.status}")
    if not martingale:
        return FeasibilityResult(False, "kernel-lp", states, targets, None, "no kernel transports every marginal to the next")
    from .payoff import Num
    from .problem import TimeGrid

    spec = ProblemSpec(
        TimeGrid.uniform(len(marginals)), marginals, Num(0.0), Mode.HMOT, "sup",
        check_convex_order=False,
    )
    P = spec.n_paths
    if P > max_vars:
        return FeasibilityResult(None, "undecided", states, targets, None, f"undecided at internal scale ({P} paths)")
    primal = build_primal(spec, max_vars=0, names=False)
    psol = solve(primal.model, backend)
    if psol.optimal:
        return FeasibilityResult(True, "path-space", message="homogeneous martingale coupling found on the path space")
    return FeasibilityResult(False, "path-space", message="path-space LP infeasible")
