"""Potential-based solvers for one-dimensional mean-field planning problems.

The package turns planning problems between two prescribed densities into
convex minimization over a potential pair ``(phi, q)``, recovers the value
function / density pair from the minimizer, handles density-dependent
(congestion) running costs through a regularized monotone-operator fixed
point, and evaluates a two-population pedestrian model by explicit
Hopf-Lax formulas.

Modules
-------
grid        uniform periodic space-time lattice and stencils
model       Hamiltonians, Lagrangians, couplings, perspective integrands
planning    the convex variational solver in (phi, q)
recovery    value function / density extraction and PDE residuals
congestion  monotone operator, inner solvers, fixed-point driver
hughes      Hopf-Lax evaluation of the pedestrian model
cli         config parsing, run/validate entry points, file formats
"""

__version__ = "0.1.0"
