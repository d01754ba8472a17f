"""Sparse linear programs: model, internal simplex, HiGHS backend and export."""

from .model import EQ, GE, LE, LPBuilder, LPModel, LPSolution, ResidualReport, certify, check_point
from .simplex import SimplexOptions
from .solve import BACKENDS, HighsSession, solve

__all__ = [
    "EQ", "GE", "LE", "LPBuilder", "LPModel", "LPSolution", "ResidualReport",
    "SimplexOptions", "BACKENDS", "HighsSession", "certify", "check_point", "solve",
]
