"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2,
solver hard failures exit 3, failed verification checks exit 4.
"""


class DomainError(ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class RegimeError(ValueError):
    """Parameters lie outside the asymptotic regime a formula is valid in."""


class ConfigError(ValueError):
    """A run configuration is malformed or violates a constraint."""


class ConvergenceError(RuntimeError):
    """An iterative procedure (quadrature, Newton, shooting) failed to converge."""


class NoSeparatrixError(ConvergenceError):
    """The shooting scan found no sign change to bracket."""


class SeedError(ValueError):
    """Series seed requested outside its validity range."""


class StepRejected(RuntimeError):
    """A time step must be retried with a smaller dt (not a hard failure)."""


class SolverFailure(RuntimeError):
    """Hard failure of a time-dependent run; carries the partial trajectory."""

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class CheckFailure(RuntimeError):
    """A verification check ran to completion and did not meet its threshold."""
