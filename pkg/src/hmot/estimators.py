"""Estimator-style wrappers.

``RobustPricer`` is fitted on market marginals and predicts the interval of
consistent prices for a list of payoffs.  ``GridProjector`` moves measures
onto a shared grid so homogeneity constraints have common support.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .hedging import HedgePortfolio, extract_portfolio
from .measures import project_to_grid
from .problem import Mode, ProblemSpec, SolverOptions, TimeGrid
from .transport import BoundsResult, bounds
from .validation import check_grid, check_marginals, check_payoff


class RobustPricer(BaseEstimator):
    """Model-free price bounds from marginal laws.

    Args:
        mode: ``ot``, ``mot``, ``hmot``, ``hmot2`` or ``rhmot``.
        times: Trading-day labels of the marginals (default ``1..N``).
        metric: Distance for ``rhmot`` (``tv`` or ``w1``).
        r: Relaxation level for ``rhmot``.
        pairwise: Only Markov martingale rows (outer bounds).
        backend: LP backend, ``auto``, ``simplex`` or ``highs``.
        max_vars: Path-variable cap.

    Example:
        >>> pricer = RobustPricer(mode="mot").fit([{-1: .5, 1: .5}, {-2: .5, 2: .5}])
        >>> pricer.predict(["pos(S2 - S1)"]).tolist()
        [[0.75, 0.75]]
    """

    def __init__(self, mode="mot", times=None, metric="tv", r=None, pairwise=False, backend="auto", max_vars=200_000):
        self.mode = mode
        self.times = times
        self.metric = metric
        self.r = r
        self.pairwise = pairwise
        self.backend = backend
        self.max_vars = max_vars

    def fit(self, X, y=None):
        """Store and validate the marginals ``X`` (one measure per time point)."""
        self.marginals_ = check_marginals(X)
        n = len(self.marginals_)
        self.grid_ = TimeGrid(self.times) if self.times is not None else TimeGrid.uniform(n)
        self.mode_ = Mode(self.mode)
        self.results_ = {}
        return self

    def _spec(self, payoff) -> ProblemSpec:
        expr = check_payoff(payoff, len(self.marginals_))
        return ProblemSpec(
            self.grid_, self.marginals_, expr, self.mode_, "both", metric=self.metric, r=self.r,
            pairwise=self.pairwise, solver=SolverOptions(backend=self.backend, max_vars=self.max_vars),
        )

    def bounds_for(self, payoff) -> BoundsResult:
        check_is_fitted(self, "marginals_")
        key = str(payoff)
        if key not in self.results_:
            self.results_[key] = bounds(self._spec(payoff))
        return self.results_[key]

    def predict(self, X) -> np.ndarray:
        """``[inf, sup]`` per payoff in ``X`` (NaN where the LP is infeasible)."""
        if isinstance(X, str):
            X = [X]
        out = np.full((len(X), 2), np.nan)
        for i, payoff in enumerate(X):
            res = self.bounds_for(payoff)
            for j, v in enumerate((res.inf, res.sup)):
                if v is not None:
                    out[i, j] = v
        return out

    def hedge(self, payoff, sense: str = "sup") -> HedgePortfolio:
        """Dual portfolio certifying the bound on ``payoff``."""
        res = self.bounds_for(payoff)
        return extract_portfolio(res.primal, res.results[sense].solution, sense)


class GridProjector(TransformerMixin, BaseEstimator):
    """Project measures onto a common grid, preserving means and convex order.

    Args:
        grid: Explicit grid; when ``None`` an equally spaced grid of
            ``n_points`` spanning all fitted supports is used.
        n_points: Grid size when ``grid`` is not given.
    """

    def __init__(self, grid=None, n_points=60):
        self.grid = grid
        self.n_points = n_points

    def fit(self, X, y=None):
        measures = check_marginals(X, min_count=1)
        if self.grid is not None:
            self.grid_ = check_grid(self.grid)
        else:
            lo = min(float(m.values[0]) for m in measures)
            hi = max(float(m.values[-1]) for m in measures)
            if hi <= lo:
                hi = lo + 1.0
            self.grid_ = np.linspace(lo, hi, int(self.n_points))
        return self

    def transform(self, X):
        check_is_fitted(self, "grid_")
        return [project_to_grid(m, self.grid_) for m in check_marginals(X, min_count=1)]
