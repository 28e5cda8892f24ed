"""Exception hierarchy.

Parameter problems derive from ``ValueError`` so callers that only care about
bad input can catch that. Everything numerical derives from
``ConvergenceError``; the CLI maps the two families to distinct exit codes.
"""


class ParameterError(ValueError):
    """Invalid argument (shape, range, unknown name, ...)."""


class DomainError(ParameterError):
    """Evaluation point outside the supported domain."""


class BranchError(ParameterError):
    """Complex point lies on the branch cut of the principal logarithm."""


class ConvergenceError(ArithmeticError):
    """A numerical procedure failed to reach its accuracy target."""


class PrecisionError(ConvergenceError):
    """Working precision or mesh size is insufficient; raise digits or M."""


class RootCountError(ConvergenceError):
    """Root search found a different number of sign changes than expected."""


class InvariantError(ConvergenceError):
    """A computed object violates a structural invariant (e.g. a negative weight)."""


class OracleError(ConvergenceError):
    """Reference quadrature for a target function did not converge."""
