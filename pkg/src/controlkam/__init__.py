"""Optimal control costs, weak-KAM potentials and discrete transport on grids."""

__version__ = "0.1.0"

from .errors import (ControlKamError, DisconnectedError, DivergenceError, DomainError,  # noqa: E402
                     IndeterminateExpansionError, InfeasibleError, InvalidInputError, NonConvergenceError,
                     UnreachablePointError, UnreachedError)

__all__ = [
    "ControlKamError", "DisconnectedError", "DivergenceError", "DomainError", "IndeterminateExpansionError",
    "InfeasibleError", "InvalidInputError", "NonConvergenceError", "UnreachablePointError", "UnreachedError",
]
