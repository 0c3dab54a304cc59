"""Exception types shared across the package."""


class LdpmError(Exception):
    """Base class for all package errors."""


class ConfigurationError(LdpmError):
    """Invalid physical configuration or input file."""


class PackingError(LdpmError):
    """Particle packing could not place a sphere."""


class MeshGenerationError(LdpmError):
    """Tessellation or periodic pairing failed."""


class NonConvergenceError(LdpmError):
    """A quasi-static solve did not reach the residual tolerance."""

    def __init__(self, message, worst_residual=None):
        super().__init__(message)
        self.worst_residual = worst_residual


class NumericalInstabilityError(LdpmError):
    """Explicit time integration produced non-finite or growing state."""


class HandoffError(LdpmError):
    """Inserted RVE disagrees too strongly with the elastic prediction."""
