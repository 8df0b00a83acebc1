"""Primal-dual smoothing for nonsmooth weakly convex problems with max-structure.

Minimise q(x) = max_{y in Y} Phi(x, y) - g(y) + r(x) by an outer proximal
point loop whose strongly-convex-concave subproblems are solved with an
inexact accelerated proximal gradient method in general (Bregman) geometry.
"""

__version__ = "0.1.0"
