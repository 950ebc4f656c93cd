"""Normal-bundle torsion of immersed discs in R^{n+2}.

Finite-difference geometry on the unit disc, gauge descent to critical normal
frames, the Grassmann-type elliptic system for their potentials, and the
quantitative bounds that relate total torsion to normal curvature.
"""
from .disc_grid import DiscGrid, build_grid, solve_poisson
from .functional import gauge_descent, total_torsion, total_torsion_conformal
from .geometry import initial_frame, metric, normal_curvature_ricci, torsion
from .grassmann import delta_g, solve_system
from .surfaces import make_surface

__all__ = [
    "DiscGrid",
    "build_grid",
    "solve_poisson",
    "gauge_descent",
    "total_torsion",
    "total_torsion_conformal",
    "initial_frame",
    "metric",
    "normal_curvature_ricci",
    "torsion",
    "delta_g",
    "solve_system",
    "make_surface",
]
