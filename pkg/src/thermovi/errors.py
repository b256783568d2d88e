"""Exception hierarchy shared by the integrators and the CLI."""

from __future__ import annotations


class ThermoError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ThermoError, ValueError):
    """Non-finite or malformed input."""


class ModelError(ThermoError, ValueError):
    """Invalid model construction (bad parameters, singular mass matrix, ...)."""


class AssumptionViolation(ThermoError):
    """Temperature ``dU/dS`` is not strictly positive at an evaluated point."""

    def __init__(self, q, S, T, detail=None):
        self.q = q
        self.S = S
        self.T = T
        msg = detail or f"non-positive temperature T={T!r}"
        super().__init__(f"{msg} at q={q!r}, S={S!r}")


class RangeError(ThermoError, OverflowError):
    """Exponential overflow in the internal energy."""


class RegimeError(ThermoError, ValueError):
    """Closed-form solution requested outside the underdamped regime."""


class StepFailure(ThermoError):
    """Newton iteration for a discrete step did not converge."""

    def __init__(self, message, index=None, residual=None):
        self.index = index
        self.residual = residual
        if index is not None:
            message = f"step {index}: {message}"
        super().__init__(message)


class RegularityError(StepFailure):
    """Singular Jacobian (regularity matrix) met during a step."""


class InitializationError(StepFailure):
    """Could not solve the discrete constraint for the first entropy value."""


class ConfigError(ThermoError, ValueError):
    """Invalid run configuration."""
