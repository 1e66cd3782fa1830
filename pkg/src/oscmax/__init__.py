"""Geometric maximal functions and oscillation norms on grids."""

__version__ = "0.1.0"

from .bases import Basis, BasisSpec, FactorSplit, Shape, check_engulfing, enumerate_shapes
from .expr import Expr, parse
from .funcs import sample
from .grid import Box, GridFunction, make_grid
from .operators import OscReport, blo_norm, bmo_norm, maximal, norm, rec_blo, rec_bmo

__all__ = [
    "Basis", "BasisSpec", "Box", "Expr", "FactorSplit", "GridFunction", "OscReport", "Shape",
    "blo_norm", "bmo_norm", "check_engulfing", "enumerate_shapes", "make_grid", "maximal", "norm",
    "parse", "rec_blo", "rec_bmo", "sample",
]
