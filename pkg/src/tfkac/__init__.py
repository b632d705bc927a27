"""Solver for the 2D backward tempered fractional Feynman-Kac equation."""
from .grid import Grid, ProblemSpec, make_grid, project_field
from .special import BE, SBD, c2beta, gamma_fn, rl_tempered_integral_exp
from .spatial import SpatialOperator, apply_dense, assemble

__version__ = "0.1.0"

__all__ = [
    "BE",
    "SBD",
    "Grid",
    "ProblemSpec",
    "SpatialOperator",
    "apply_dense",
    "assemble",
    "c2beta",
    "gamma_fn",
    "make_grid",
    "project_field",
    "rl_tempered_integral_exp",
]
