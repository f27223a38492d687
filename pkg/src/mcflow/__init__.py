"""mcflow: constructive tools for compressible Navier-slip flow on
multiply connected planar domains.

Subpackages cover domain geometry, Laplace collocation solvers and
harmonic-measure critical points, Neumann Green's functions with
principal-part diagnostics, conformal maps of doubly connected domains,
div-curl systems, the exact rotating steady family on the annulus, a
time-dependent compressible solver, and the effective-viscous-flux
commutator checks.
"""

__version__ = "0.1.0"

from .geometry import CircularDomain, SmoothDomain, DomainError, build_grid, load_domain
from .laplace import SeriesHarmonic, solve_dirichlet, harmonic_measure, find_critical_points, period_matrix

__all__ = [
    "CircularDomain",
    "SmoothDomain",
    "DomainError",
    "build_grid",
    "load_domain",
    "SeriesHarmonic",
    "solve_dirichlet",
    "harmonic_measure",
    "find_critical_points",
    "period_matrix",
    "__version__",
]
