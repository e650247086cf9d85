"""Forward-generated training data and learned solvers for periodic Poisson problems."""
from .gridfield import BC, BoundarySpec, Dirichlet, Grid, Neumann, Periodic, estimate_spectrum
from .linsolve import LaplaceOperator, MGConfig, SolverReport, bicgstab, mg_solve, mg_vcycle

__version__ = "0.1.0"
