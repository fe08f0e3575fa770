"""Numerical laboratory for Schrodinger operators -Laplace + V with singular
potentials: torsion functions, zero-set decomposition, monotone approximation
schemes, and positive Poincare weights.

Import the submodules directly, e.g. ``from torsionlab import grid, potential``.
The package root stays import-light so the command-line entry point can pin
BLAS threading before numpy loads.
"""

__version__ = "0.1.0"
