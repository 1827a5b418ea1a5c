"""Exception hierarchy shared by all modules.

The CLI maps each family onto its own exit status, so callers that need to
distinguish a bad configuration from an infeasible operating point can do
so without parsing messages.
"""


class SmMimoError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(SmMimoError, ValueError):
    """Invalid or unknown configuration values."""


class PlacementError(ConfigurationError):
    """UE placement parameters that cannot be honoured."""


class InfeasibleError(SmMimoError, ValueError):
    """Operating point violates a system constraint (B >= T, M <= NK)."""


class DomainError(SmMimoError, ValueError):
    """Function evaluated outside its mathematical domain."""


class NumericalError(SmMimoError, ArithmeticError):
    """A numerical procedure failed (non-finite values, singular matrices)."""


class DegenerateCorrelationError(NumericalError):
    """Transmit correlation matrix is not safely positive definite."""
