"""Exception hierarchy shared by all modules."""


class ControlKamError(Exception):
    """Base class for every error raised by the package."""


class DomainError(ControlKamError):
    """A state left the box chart (or a support left its horizon)."""


class DivergenceError(ControlKamError):
    """A supremum over controls looks unbounded."""


class UnreachedError(ControlKamError):
    """No optimizer restart met the endpoint tolerance."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


class DisconnectedError(ControlKamError):
    """The cost matrix has no finite cycle / no finite path structure."""


class NonConvergenceError(ControlKamError):
    """An iterative scheme stalled before reaching its tolerance."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace or [])


class InvalidInputError(ControlKamError):
    """Input failed a documented precondition."""


class InfeasibleError(ControlKamError):
    """A transport problem has no feasible coupling on finite entries."""


class IndeterminateExpansionError(ControlKamError):
    """Endpoint displacement is numerically zero for every epsilon."""


class UnreachablePointError(ControlKamError):
    """A Lax-Oleinik column is entirely +inf."""
