"""Immersed-boundary blood-flow simulation with RBF-reconstructed cell surfaces.

Subpackages and modules, from the bottom up:

* :mod:`rbfib.sphere` - sphere parametrization, Bauer spiral, spherical harmonics
* :mod:`rbfib.rbf` - polyharmonic-spline interpolation and operator matrices
* :mod:`rbfib.quadrature` - quadrature weights on the sphere and on surfaces
* :mod:`rbfib.membrane` - surface geometry, energies and membrane forces
* :mod:`rbfib.fluid` - staggered-grid Navier-Stokes solver
* :mod:`rbfib.coupling` - delta-kernel interpolation and spreading
* :mod:`rbfib.cells` - RBC, platelet and endothelium models
* :mod:`rbfib.lab` - experiments, diagnostics, output and the command line
"""
__version__ = "0.1.0"

from .cells import CellSpec, Placement, assemble_cell
from .estimator import SphericalRBFInterpolator
from .rbf import build_system, interpolate
from .sphere import bauer_spiral

__all__ = ["CellSpec", "Placement", "SphericalRBFInterpolator", "assemble_cell",
           "bauer_spiral", "build_system", "interpolate", "__version__"]
