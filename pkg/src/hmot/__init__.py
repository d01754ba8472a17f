"""Robust price bounds under martingale transport with time-homogeneous kernels."""

__version__ = "0.1.0"

from .exceptions import (  # noqa: E402
    ArbitrageError, ConfigError, DomainError, HMOTError, InfeasibleError, InputError,
    NotOptimalError, NumericalInstabilityError, PayoffEvaluationError, PayoffSyntaxError,
    ScaleLimitError,
)
from .measures import (  # noqa: E402
    DiscreteMeasure, FiniteMeasure, convex_order, density, from_call_quotes, lognormal_chain,
    lognormal_kernel, meet, project_to_grid, quantize_lognormal, uniform_band,
)
from .payoff import eval_payoff, parse_payoff  # noqa: E402
from .problem import DeltaSet, HomTuple, Metric, Mode, ProblemSpec, SolverOptions, TimeGrid, build_delta  # noqa: E402
from .transport import (  # noqa: E402
    Coupling, add_r_homogeneity, bounds, build_primal, check_homogeneous, feasibility_hom,
    pair_marginal, pricing_rule,
)
from .hedging import (  # noqa: E402
    HedgePortfolio, dual_gap, extract_portfolio, portfolio_cost, verify_superhedge,
)
from .penalized import PenaltyConfig, gini, pen_objective, solve_pen_hmot  # noqa: E402
from .estimators import GridProjector, RobustPricer  # noqa: E402

__all__ = [
    "ArbitrageError", "ConfigError", "DomainError", "HMOTError", "InfeasibleError", "InputError",
    "NotOptimalError", "NumericalInstabilityError", "PayoffEvaluationError", "PayoffSyntaxError",
    "ScaleLimitError",
    "DiscreteMeasure", "FiniteMeasure", "convex_order", "density", "from_call_quotes",
    "lognormal_chain", "lognormal_kernel", "meet", "project_to_grid", "quantize_lognormal",
    "uniform_band",
    "eval_payoff", "parse_payoff",
    "DeltaSet", "HomTuple", "Metric", "Mode", "ProblemSpec", "SolverOptions", "TimeGrid", "build_delta",
    "Coupling", "add_r_homogeneity", "bounds", "build_primal", "check_homogeneous", "feasibility_hom",
    "pair_marginal", "pricing_rule",
    "HedgePortfolio", "dual_gap", "extract_portfolio", "portfolio_cost", "verify_superhedge",
    "PenaltyConfig", "gini", "pen_objective", "solve_pen_hmot",
    "GridProjector", "RobustPricer",
]
