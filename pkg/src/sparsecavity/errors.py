"""Exception hierarchy; each class maps to one CLI exit category."""


class CavityError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ParameterDomainError(CavityError, ValueError):
    """An input lies outside the domain an operation is defined on."""

    exit_code = 2


class PhaseDomainError(CavityError, ValueError):
    """The requested solution branch does not exist at this (alpha, rho)."""

    exit_code = 3


class SolverFailure(CavityError, RuntimeError):
    """A root find or fixed-point solve did not converge.

    ``diagnostics`` carries whatever the solver knew when it gave up
    (bracket, last residual pair, failed grid points, ...).
    """

    exit_code = 3

    def __init__(self, message, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class QuadratureError(CavityError, ArithmeticError):
    """Panel refinement hit its limit before reaching the requested accuracy."""

    exit_code = 3

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual estimate {residual:.3e})")
        self.residual = residual


class NonConvergenceError(CavityError, RuntimeError):
    """The regression solver hit its iteration cap; keeps the best iterate."""

    exit_code = 3

    def __init__(self, message, best_iterate, kkt_violation):
        super().__init__(f"{message} (KKT violation {kkt_violation:.3e})")
        self.best_iterate = best_iterate
        self.kkt_violation = kkt_violation


class SweepError(SolverFailure):
    """Some points of a parameter sweep failed; the rest are kept.

    ``failed`` lists ``(value, message)`` pairs and ``partial`` the points
    that did converge.
    """

    def __init__(self, message, failed, partial):
        super().__init__(f"{message}: {len(failed)} point(s) failed", failed=failed)
        self.failed = failed
        self.partial = partial
