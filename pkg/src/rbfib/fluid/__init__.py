"""Incompressible Navier-Stokes on a staggered grid."""
from .advection import advection
from .grid import PERIODIC, AxisBC, MacGrid
from .operators import (divergence, ghost_fill, gradient, modified_identity, pressure_laplacian,
                        velocity_laplacian)
from .solvers import SolverConfig, SolverDivergence, pcg
from .stepping import FluidSolver

__all__ = ["AxisBC", "PERIODIC", "MacGrid", "FluidSolver", "SolverConfig", "SolverDivergence",
           "advection", "divergence", "ghost_fill", "gradient", "modified_identity", "pressure_laplacian",
           "velocity_laplacian", "pcg"]
