"""Exception hierarchy shared by all modules."""


class GEquationError(Exception):
    """Base class for library errors."""


class ConfigurationError(GEquationError, ValueError):
    """Malformed flow, grid, solver or CLI configuration."""


class DimensionError(GEquationError, ValueError):
    """Operation called on a field or flow of the wrong dimension."""


class StabilityError(GEquationError):
    """Requested time step exceeds the monotonicity bound."""


class DivergenceError(GEquationError):
    """Non-finite values appeared during time stepping."""

    def __init__(self, step: int, time: float):
        super().__init__(f"non-finite values at step {step} (t={time:.6g})")
        self.step = step
        self.time = time


class NonConvergenceError(GEquationError):
    """Iterative procedure did not reach its tolerance."""

    def __init__(self, message: str, residual: float = float("nan"), partial=None):
        super().__init__(message)
        self.residual = residual
        self.partial = partial


class BranchError(GEquationError):
    """Requested slope cannot be attained on the admissible branch."""

    def __init__(self, message: str, minimum: float):
        super().__init__(message)
        self.minimum = minimum


class BracketingError(GEquationError):
    """Parameter grid does not bracket the sought root."""


class ResolutionError(GEquationError):
    """Grid too coarse for the requested scale."""


class ControlViolationError(GEquationError):
    """A policy returned a control outside the admissible set."""


class ResourceError(GEquationError):
    """Estimated work exceeds the configured budget."""


class InapplicableError(GEquationError):
    """Inputs fall outside the hypotheses of the operation."""
