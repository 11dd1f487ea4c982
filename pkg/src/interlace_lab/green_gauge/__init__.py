"""Lattice Green function, potential theory and the gauge function."""
from .potential import (
    DENSE_CAP,
    EquilibriumData,
    EquilibriumError,
    GreenMatrix,
    TooLargeError,
    capacity,
    equilibrium,
    green_between,
    green_matrix,
    hitting_probability,
)
from .quadrature import GreenQuadratureError, green_value, green_values
from .table import GreenFunction, get_green
from .gauge import GaugeResult, TruncatedSolve, gauge_solve, solve_truncated
