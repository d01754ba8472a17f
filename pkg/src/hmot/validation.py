"""Input coercion for the public API."""

from __future__ import annotations

from collections.abc import Mapping, Sequence

import numpy as np

from .exceptions import InputError
from .measures import DiscreteMeasure, FiniteMeasure
from .payoff import Expr, parse_payoff

SENSES = ("inf", "sup", "both")


def check_measure(obj, name: str = "measure") -> DiscreteMeasure:
    """Accept a measure, a ``{value: weight}`` mapping or an ``(n, 2)`` array of atoms."""
    if isinstance(obj, DiscreteMeasure):
        return obj
    if isinstance(obj, FiniteMeasure):
        return DiscreteMeasure.from_atoms(obj.values, obj.weights, normalize=True)
    try:
        if isinstance(obj, Mapping):
            vals = np.array(list(obj.keys()), dtype=float)
            wts = np.array(list(obj.values()), dtype=float)
        else:
            arr = np.asarray(obj, dtype=float)
            if arr.ndim != 2 or arr.shape[1] != 2:
                raise InputError(f"{name}: expected (value, weight) pairs, got shape {arr.shape}")
            vals, wts = arr[:, 0], arr[:, 1]
        order = np.argsort(vals)
        return DiscreteMeasure.from_atoms(vals[order], wts[order])
    except (TypeError, ValueError) as exc:
        raise InputError(f"{name}: {exc}") from exc


def check_marginals(seq, min_count: int = 2) -> tuple:
    if isinstance(seq, (FiniteMeasure, Mapping)) or not isinstance(seq, Sequence) and not hasattr(seq, "__iter__"):
        raise InputError("marginals must be a sequence of measures")
    out = tuple(check_measure(m, f"marginal {t + 1}") for t, m in enumerate(seq))
    if len(out) < min_count:
        raise InputError(f"need at least {min_count} marginals, got {len(out)}")
    return out


def check_grid(grid, name: str = "grid") -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or len(g) < 2:
        raise InputError(f"{name} must be a 1-d array with at least two points")
    if not np.all(np.isfinite(g)) or np.any(np.diff(g) <= 0):
        raise InputError(f"{name} must be finite and strictly increasing")
    return g


def check_payoff(payoff, n_coords: int) -> Expr:
    if isinstance(payoff, Expr):
        if payoff.max_coord() > n_coords:
            raise InputError(f"payoff references S{payoff.max_coord()} beyond {n_coords} time points")
        return payoff
    if not isinstance(payoff, str):
        raise InputError("payoff must be an expression string")
    return parse_payoff(payoff, n_coords)


def check_sense(sense: str) -> str:
    if sense not in SENSES:
        raise InputError(f"sense must be one of {SENSES}, not {sense!r}")
    return sense
