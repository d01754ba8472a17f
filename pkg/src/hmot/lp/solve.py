"""Backend dispatch: the internal simplex or HiGHS (through highspy)."""

from __future__ import annotations

import logging
import time

import highspy
import numpy as np

from ..exceptions import InputError, NumericalInstabilityError
from .model import EQ, GE, LE, LPModel, LPSolution, certify
from .simplex import SimplexOptions, simplex

log = logging.getLogger(__name__)

BACKENDS = ("auto", "simplex", "highs")
# above this many columns HiGHS runs interior point plus crossover instead of dual simplex
HIGHS_IPM_COLS = 20_000
# past this size the interior point factorization fills in badly on path LPs; primal simplex wins
HIGHS_PRIMAL_COLS = 100_000

_STATUS = {
    highspy.HighsModelStatus.kOptimal: "optimal",
    highspy.HighsModelStatus.kInfeasible: "infeasible",
    highspy.HighsModelStatus.kUnbounded: "unbounded",
    highspy.HighsModelStatus.kIterationLimit: "iteration_limit",
}


def solve(
    model: LPModel,
    backend: str = "auto",
    options: SimplexOptions | None = None,
    simplex_max_cols: int = 4000,
) -> LPSolution:
    """Solve an LP and attach dual values and optimality residuals.

    Args:
        model: The linear program.
        backend: ``"simplex"`` (internal), ``"highs"``, or ``"auto"`` which uses
            the internal solver up to ``simplex_max_cols`` columns.
        options: Pivoting options for the internal solver; ``max_iter`` is
            also passed to HiGHS.

    Returns:
        An :class:`LPSolution`.  Non-optimal statuses carry no primal point;
        an infeasible internal solve lists the rows of its phase-1 certificate.
    """
    if backend not in BACKENDS:
        raise InputError(f"unknown LP backend {backend!r}; choose from {BACKENDS}")
    options = options or SimplexOptions()
    fallback = backend == "auto"
    if backend == "auto":
        backend = "simplex" if model.n_cols <= simplex_max_cols else "highs"
    if backend == "highs":
        return HighsSession(model, options).solve()
    start = time.perf_counter()
    try:
        res = simplex(model, options)
    except NumericalInstabilityError as exc:
        if not fallback:
            raise
        log.warning("internal simplex gave up (%s); retrying with HiGHS", exc)
        return HighsSession(model, options).solve()
    log.debug("simplex: %s after %d iterations (%.2fs)", res.status, res.iterations, time.perf_counter() - start)
    sol = LPSolution(
        status=res.status, iterations=res.iterations, backend="simplex",
        message=res.message, infeasible_rows=res.farkas_rows,
    )
    return _finish(model, sol, res.x, res.y)


def _finish(model: LPModel, sol: LPSolution, x, ym) -> LPSolution:
    if sol.status != "optimal":
        return sol
    s = 1.0 if model.sense == "min" else -1.0
    y = s * ym
    dual_obj, d, pres, dres, cres = certify(model, x, y)
    sol.objective = float(model.c @ x)
    sol.x = x
    sol.duals = y
    sol.reduced_costs = d
    sol.dual_objective = dual_obj
    sol.primal_residual = pres
    sol.dual_residual = dres
    sol.cs_residual = cres
    return sol


class HighsSession:
    """One model loaded into HiGHS; the objective can be swapped and re-solved warm.

    The model is always passed as a minimization of ``s * c`` (``s = -1`` for
    max problems) so HiGHS row duals are the min-form multipliers directly.
    ``method`` is ``simplex`` (dual), ``primal``, ``ipm`` or ``pdlp``; by
    default it is picked from the column count.
    """

    def __init__(self, model: LPModel, options: SimplexOptions | None = None, method: str | None = None):
        options = options or SimplexOptions()
        self.model = model
        if method is None:
            method = "simplex"
            if model.n_cols > HIGHS_PRIMAL_COLS:
                method = "primal"
            elif model.n_cols > HIGHS_IPM_COLS:
                method = "ipm"
        self.method = method
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        self._set_method(h, method)
        h.setOptionValue("simplex_iteration_limit", int(options.max_iter))
        h.setOptionValue("primal_feasibility_tolerance", min(options.feas_tol, 1e-7))
        h.setOptionValue("dual_feasibility_tolerance", min(options.opt_tol, 1e-7))
        inf = highspy.kHighsInf
        lp = highspy.HighsLp()
        lp.num_col_ = model.n_cols
        lp.num_row_ = model.n_rows
        s = 1.0 if model.sense == "min" else -1.0
        lp.col_cost_ = s * model.c
        lp.col_lower_ = np.where(np.isfinite(model.lb), model.lb, -inf)
        lp.col_upper_ = np.where(np.isfinite(model.ub), model.ub, inf)
        rel = model.relations
        lp.row_lower_ = np.where((rel == EQ) | (rel == GE), model.rhs, -inf)
        lp.row_upper_ = np.where((rel == EQ) | (rel == LE), model.rhs, inf)
        A = model.A.tocsc()
        lp.a_matrix_.format_ = highspy.MatrixFormat.kColwise
        lp.a_matrix_.start_ = A.indptr
        lp.a_matrix_.index_ = A.indices
        lp.a_matrix_.value_ = A.data
        h.passModel(lp)
        self._h = h

    @staticmethod
    def _set_method(h, method: str):
        h.setOptionValue("solver", "simplex" if method == "primal" else method)
        h.setOptionValue("simplex_strategy", 4 if method == "primal" else 1)

    def solve(self, c=None, sense: str | None = None) -> LPSolution:
        """Solve, optionally after replacing the objective (warm-started from the last basis)."""
        if c is not None or sense is not None:
            self.model = self.model.with_objective(self.model.c if c is None else c, sense or self.model.sense)
            s = 1.0 if self.model.sense == "min" else -1.0
            n = self.model.n_cols
            self._h.changeColsCost(n, np.arange(n, dtype=np.int32), s * self.model.c)
        start = time.perf_counter()
        h = self._h
        h.run()
        status = h.getModelStatus()
        if status == highspy.HighsModelStatus.kUnboundedOrInfeasible:
            # presolve could not tell; a plain simplex run decides
            h.setOptionValue("presolve", "off")
            self._set_method(h, "simplex")
            h.run()
            status = h.getModelStatus()
            h.setOptionValue("presolve", "choose")
            self._set_method(h, self.method)
        if status not in _STATUS:
            # a warm start can leave HiGHS stuck; retry cold, then with the other algorithm
            for method in (self.method, "simplex" if self.method == "ipm" else "ipm"):
                h.clearSolver()
                self._set_method(h, method)
                h.run()
                status = h.getModelStatus()
                if status in _STATUS:
                    break
            self._set_method(h, self.method)
        name = _STATUS.get(status)
        if name is None:
            raise NumericalInstabilityError(f"HiGHS reported: {h.modelStatusToString(status)}")
        info = h.getInfo()
        its = int(info.simplex_iteration_count) + int(info.ipm_iteration_count) + int(info.crossover_iteration_count)
        log.debug("highs/%s: %s after %d iterations (%.2fs)", self.method, name, its, time.perf_counter() - start)
        sol = LPSolution(status=name, iterations=its, backend="highs", message=h.modelStatusToString(status))
        if name != "optimal":
            return sol
        hs = h.getSolution()
        x = np.clip(np.asarray(hs.col_value, dtype=float), self.model.lb, self.model.ub)
        return _finish(self.model, sol, x, np.asarray(hs.row_dual, dtype=float))
