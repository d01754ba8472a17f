"""Sparse linear programs and their solutions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..exceptions import InputError

EQ, LE, GE = "E", "L", "G"

# Reported tolerances; pivoting tolerances live in SimplexOptions.
PRIMAL_TOL = 1e-8
DUAL_TOL = 1e-8
GAP_RTOL = 1e-7


@dataclass(frozen=True, eq=False)
class LPModel:
    """``min/max c.x  s.t.  A x (=,<=,>=) rhs,  lb <= x <= ub``.

    ``families`` maps a constraint-family name to the row slice it occupies;
    builders use it to find marginal, martingale and homogeneity rows again.
    """

    A: sp.csr_matrix
    relations: np.ndarray
    rhs: np.ndarray
    c: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    sense: str = "min"
    row_names: tuple = ()
    col_names: tuple = ()
    name: str = "model"
    families: dict = field(default_factory=dict)

    def __post_init__(self):
        A = self.A
        if not (sp.isspmatrix_csr(A) and not A.data.flags.writeable):
            # matrices frozen by an earlier LPModel are already canonical
            A = sp.csr_matrix(A, dtype=float, copy=True)
            A.sum_duplicates()
            A.eliminate_zeros()
            A.sort_indices()
        m, n = A.shape
        rel = np.asarray(self.relations, dtype="<U1").reshape(-1)
        rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        c = np.asarray(self.c, dtype=float).reshape(-1)
        lb = np.asarray(self.lb, dtype=float).reshape(-1)
        ub = np.asarray(self.ub, dtype=float).reshape(-1)
        if rel.shape != (m,) or rhs.shape != (m,):
            raise InputError("relations and rhs must have one entry per row")
        if c.shape != (n,) or lb.shape != (n,) or ub.shape != (n,):
            raise InputError("c, lb and ub must have one entry per column")
        if not set(np.unique(rel)) <= {EQ, LE, GE}:
            raise InputError("relations must be 'E', 'L' or 'G'")
        if not (np.all(np.isfinite(A.data)) and np.all(np.isfinite(rhs)) and np.all(np.isfinite(c))):
            raise InputError("coefficients must be finite")
        if np.any(lb > ub) or np.any(lb == np.inf) or np.any(ub == -np.inf):
            raise InputError("inconsistent variable bounds")
        if self.sense not in ("min", "max"):
            raise InputError("sense must be 'min' or 'max'")
        row_names = tuple(self.row_names) or tuple(f"r{i}" for i in range(m))
        col_names = tuple(self.col_names) or tuple(f"x{j}" for j in range(n))
        if len(row_names) != m or len(col_names) != n:
            raise InputError("name tables must match the model dimensions")
        for arr in (rel, rhs, c, lb, ub, A.data, A.indices, A.indptr):
            arr.flags.writeable = False
        for k, v in (("A", A), ("relations", rel), ("rhs", rhs), ("c", c), ("lb", lb), ("ub", ub)):
            object.__setattr__(self, k, v)
        object.__setattr__(self, "row_names", row_names)
        object.__setattr__(self, "col_names", col_names)

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def n_cols(self) -> int:
        return self.A.shape[1]

    def with_objective(self, c, sense) -> "LPModel":
        return LPModel(
            self.A, self.relations, self.rhs, c, self.lb, self.ub, sense,
            self.row_names, self.col_names, self.name, dict(self.families),
        )


class LPBuilder:
    """Accumulates row blocks (COO triplets) and columns into an :class:`LPModel`."""

    def __init__(self, n_cols: int, col_names=None):
        self.n_cols = n_cols
        self.col_names = list(col_names) if col_names is not None else None
        self.lb = [np.zeros(n_cols)]
        self.ub = [np.full(n_cols, np.inf)]
        self._rows, self._cols, self._vals = [], [], []
        self._rel, self._rhs, self._names = [], [], []
        self.n_rows = 0
        self.families: dict[str, slice] = {}

    def add_columns(self, count, lb=0.0, ub=np.inf, names=None) -> np.ndarray:
        start = self.n_cols
        self.n_cols += count
        self.lb.append(np.broadcast_to(np.asarray(lb, dtype=float), (count,)).copy())
        self.ub.append(np.broadcast_to(np.asarray(ub, dtype=float), (count,)).copy())
        if self.col_names is not None:
            self.col_names.extend(names if names is not None else (f"x{j}" for j in range(start, self.n_cols)))
        return np.arange(start, self.n_cols)

    def add_rows(self, family, n, rows, cols, vals, relation, rhs, names=None) -> slice:
        """Append ``n`` rows; ``rows`` are local indices ``0..n-1``."""
        start = self.n_rows
        rows = np.asarray(rows, dtype=np.int64)
        if len(rows) and (rows.min() < 0 or rows.max() >= n):
            raise InputError(f"row index out of range in family {family}")
        if family in self.families and self.families[family].stop != start:
            raise InputError(f"family {family} must be contiguous")
        self._rows.append(rows + start)
        self._cols.append(np.asarray(cols, dtype=np.int64))
        self._vals.append(np.asarray(vals, dtype=float))
        self._rel.append(np.full(n, relation, dtype="<U1") if isinstance(relation, str) else np.asarray(relation))
        self._rhs.append(np.broadcast_to(np.asarray(rhs, dtype=float), (n,)).copy())
        self._names.append(names if names is not None else [f"{family}_{i}" for i in range(n)])
        self.n_rows += n
        sl = slice(start, self.n_rows)
        if family in self.families:
            self.families[family] = slice(self.families[family].start, self.n_rows)
        else:
            self.families[family] = sl
        return sl

    def build(self, c, sense="min", name="model") -> LPModel:
        cat = lambda parts, dtype=float: np.concatenate(parts).astype(dtype) if parts else np.empty(0, dtype)
        A = sp.csr_matrix(
            (cat(self._vals), (cat(self._rows, np.int64), cat(self._cols, np.int64))),
            shape=(self.n_rows, self.n_cols),
        )
        c = np.asarray(c, dtype=float)
        if len(c) < self.n_cols:
            c = np.concatenate([c, np.zeros(self.n_cols - len(c))])
        names = [n for block in self._names for n in block]
        return LPModel(
            A,
            cat(self._rel, "<U1") if self._rel else np.empty(0, "<U1"),
            cat(self._rhs),
            c,
            np.concatenate(self.lb),
            np.concatenate(self.ub),
            sense,
            tuple(names),
            tuple(self.col_names) if self.col_names is not None else (),
            name,
            dict(self.families),
        )


@dataclass
class LPSolution:
    """Primal/dual pair returned by :func:`hmot.lp.solve`.

    Dual signs follow the shadow-price convention ``d objective / d rhs``:
    for a max problem equality duals are free, ``<=`` rows nonnegative and
    ``>=`` rows nonpositive (mirrored for min).
    """

    status: str
    objective: float | None = None
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    iterations: int = 0
    backend: str = ""
    dual_objective: float | None = None
    primal_residual: float | None = None
    dual_residual: float | None = None
    cs_residual: float | None = None
    infeasible_rows: np.ndarray | None = None
    message: str = ""

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"

    @property
    def duality_gap(self) -> float | None:
        if self.objective is None or self.dual_objective is None:
            return None
        return abs(self.objective - self.dual_objective) / (1.0 + abs(self.objective))


@dataclass
class ResidualReport:
    row_residuals: np.ndarray
    bound_violations: np.ndarray
    objective: float
    max_row_residual: float
    max_bound_violation: float

    @property
    def max_residual(self) -> float:
        return max(self.max_row_residual, self.max_bound_violation)


def row_violations(model: LPModel, x: np.ndarray) -> np.ndarray:
    """Signed constraint violations: ``Ax - b`` on equalities, positive parts on inequalities."""
    ax = model.A @ x
    r = ax - model.rhs
    out = r.copy()
    le = model.relations == LE
    ge = model.relations == GE
    out[le] = np.maximum(r[le], 0.0)
    out[ge] = np.minimum(r[ge], 0.0)
    return out


def check_point(model: LPModel, point) -> ResidualReport:
    """Residuals of an externally supplied primal point."""
    x = np.asarray(point, dtype=float).reshape(-1)
    if x.shape != (model.n_cols,):
        raise InputError(f"point has {x.size} entries, model has {model.n_cols} variables")
    rows = row_violations(model, x)
    bounds = np.maximum(model.lb - x, 0.0) + np.maximum(x - model.ub, 0.0)
    return ResidualReport(
        row_residuals=rows,
        bound_violations=bounds,
        objective=float(model.c @ x),
        max_row_residual=float(np.max(np.abs(rows), initial=0.0)),
        max_bound_violation=float(np.max(bounds, initial=0.0)),
    )


def certify(model: LPModel, x: np.ndarray, y: np.ndarray):
    """Dual objective and feasibility/complementarity residuals of ``(x, y)``.

    ``y`` uses the shadow-price sign convention of :class:`LPSolution`.
    Returns ``(dual_objective, reduced_costs, primal_res, dual_res, cs_res)``.
    """
    s = 1.0 if model.sense == "min" else -1.0
    # everything below is in the min-normalized form
    ym = s * y
    cm = s * model.c
    d = cm - model.A.T @ ym
    lb_fin = np.isfinite(model.lb)
    ub_fin = np.isfinite(model.ub)
    dual_obj = ym @ model.rhs
    dual_obj += np.sum(np.where(lb_fin & (d > 0), d * np.where(lb_fin, model.lb, 0.0), 0.0))
    dual_obj += np.sum(np.where(ub_fin & (d < 0), d * np.where(ub_fin, model.ub, 0.0), 0.0))

    dres = np.zeros(model.n_cols)
    dres = np.where(~lb_fin, np.maximum(d, 0.0), dres)
    dres = np.maximum(dres, np.where(~ub_fin, np.maximum(-d, 0.0), 0.0))
    row_sign = np.zeros(model.n_rows)
    le = model.relations == LE
    ge = model.relations == GE
    row_sign[le] = np.maximum(ym[le], 0.0)  # min form: <= rows need y <= 0
    row_sign[ge] = np.maximum(-ym[ge], 0.0)
    dual_res = float(max(np.max(dres, initial=0.0), np.max(row_sign, initial=0.0)))

    viol = row_violations(model, x)
    primal_res = float(np.max(np.abs(viol) / (1.0 + np.abs(model.rhs)), initial=0.0))
    primal_res = max(primal_res, float(np.max(np.maximum(model.lb - x, 0) + np.maximum(x - model.ub, 0), initial=0.0)))

    slack = model.A @ x - model.rhs
    cs_rows = np.where(model.relations == EQ, 0.0, np.abs(ym * slack))
    # an infinite bound gap with a wrong-signed reduced cost is a dual, not a CS, violation
    gap_lb = np.where(lb_fin, x - np.where(lb_fin, model.lb, 0.0), 0.0)
    gap_ub = np.where(ub_fin, np.where(ub_fin, model.ub, 0.0) - x, 0.0)
    cs_cols = np.abs(np.where(d > 0, d * gap_lb, -d * gap_ub))
    cs_res = float(max(np.max(cs_rows, initial=0.0), np.max(cs_cols, initial=0.0)))
    return float(s * dual_obj), s * d, primal_res, dual_res, cs_res
