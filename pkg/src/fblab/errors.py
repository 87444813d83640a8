"""Exception types shared across the solver and analysis modules."""


class FblabError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(FblabError):
    """Experiment configuration is invalid or incomplete."""


class OutsideSupport(FblabError):
    """A stencil evaluation touched cells below the support threshold."""


class EmptySupport(FblabError):
    """An operation requires a nonempty (eroded) support mask."""


class DomainError(FblabError):
    """A reaction term was evaluated outside [0, P_H]."""


class SingularDerivative(FblabError):
    """Derivative of the reaction term blows up at the requested point."""


class SupportHitBoundary(FblabError):
    """The support reached the outer grid frame; results past here are wrong."""


class UnstableStep(FblabError):
    """A time step produced non-finite values."""


class NoConvergence(FblabError):
    """Iterative solver exceeded its iteration cap."""

    def __init__(self, iters, residual):
        super().__init__(f"no convergence after {iters} iterations, residual {residual:.3e}")
        self.iters = iters
        self.residual = residual


class EmptyDomain(FblabError):
    """The level-set domain {phi < 0} contains no cells."""


class FrontCfl(FblabError):
    """Front advection step would move the interface more than one cell."""


class PointOutsideDomain(FblabError):
    """A probe point lies outside the solved domain."""


class NotConcaveAtLo(FblabError):
    """Sharp-index bisection requires a Concave verdict at the lower bracket."""


class ParamsInconsistent(FblabError):
    """Counterexample parameters violate their case constraints."""


class SearchFailed(FblabError):
    """Parameter search exhausted its candidate ladder."""

    def __init__(self, message, attempts=()):
        super().__init__(message)
        self.attempts = list(attempts)


class ExtensionFailed(FblabError):
    """Concave extension amplitude exceeded its cap."""
