"""Exception types shared across the package."""


class DomainError(ValueError):
    """A point lies outside the computational half-domain."""


class SpecError(ValueError):
    """A problem specification violates a structural hypothesis."""


class ResolutionError(ValueError):
    """A radius fell below the grid resolution floor (or above the window)."""


class DegenerateNormalizationError(ValueError):
    """An Almgren rescaling was requested where the boundary L2 norm vanishes."""


class InternalInconsistencyError(RuntimeError):
    """A numerically observed state that the theory rules out."""


class NonConvergedError(RuntimeError):
    """The minimizer failed to reach tolerance.

    Carries the last iterate and the energy history so callers can inspect
    the stall.
    """

    def __init__(self, message, last_iterate=None, energy_history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.energy_history = list(energy_history) if energy_history else []
