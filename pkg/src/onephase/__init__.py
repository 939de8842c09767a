"""Numerical laboratory for a one-phase singular perturbation problem.

The package discretizes the semilinear problem Delta u = f_eps(u) together
with its energy, inner variations under domain deformations, and the
interface checkers (nondegeneracy, density, Lipschitz, convergence,
free-boundary stability forms) that probe the sharp-interface limit.
"""

from __future__ import annotations

__version__ = "0.1.0"

__all__ = ["__version__"]
