"""Optimal control of a bilinear 1-D Schrodinger equation on a box grid.

Forward/adjoint Crank-Nicolson propagation, exact discrete gradients,
second-order (Goh-transformed) quadratic forms, projected-gradient
solver, and arc-structure analysis, plus a small CLI.
"""

__version__ = "0.1.0"

from .field import SpatialGrid, Potential
from .dynamics import TimeGrid, Control, Trajectory
from .objective import ProblemSpec, CostBreakdown
from .optimizer import SolverOptions, SolveResult, solve

__all__ = [
    "SpatialGrid",
    "Potential",
    "TimeGrid",
    "Control",
    "Trajectory",
    "ProblemSpec",
    "CostBreakdown",
    "SolverOptions",
    "SolveResult",
    "solve",
    "__version__",
]
