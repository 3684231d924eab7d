"""Numerical laboratory for slip-regularized thin-film droplet dynamics."""

__version__ = "0.1.0"

from . import errors, harness, inner_ode, model, pde_solver  # noqa: F401
