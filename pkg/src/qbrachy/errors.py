"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain an operation is defined on."""


class IntegrationError(RuntimeError):
    """ODE integration failed; ``xi`` is the scaled time where it stopped."""

    def __init__(self, message, xi=None):
        super().__init__(message)
        self.xi = xi


class NormDriftError(RuntimeError):
    """Complex propagation lost more norm than the accepted budget."""


class DegenerateSolutionError(ValueError):
    """A scaled solution cannot be mapped back to physical units (u = 0)."""
