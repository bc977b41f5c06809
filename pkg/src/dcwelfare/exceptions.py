"""Exception and warning types raised across the package."""


class WelfareError(Exception):
    """Base class for computational failures specific to this package."""


class NoSolutionError(WelfareError):
    """A root bracket could not be established (invalid family for a draw)."""


class DegenerateConditioningError(WelfareError):
    """Conditioning on an event whose probability is numerically zero."""


class IntegrationDomainError(WelfareError):
    """The effective support of an integrand could not be bracketed."""


class NonIntegrableCurveError(WelfareError):
    """A distribution curve has unresolved tails that do not converge."""


class ConfigError(ValueError):
    """Invalid run configuration. ``errors`` lists every problem found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ExtrapolationWarning(UserWarning):
    """A kernel estimate was requested far from every sample point."""


class TruncationWarning(UserWarning):
    """A distribution curve does not reach its limiting values on its grid."""


class InconsistentModelWarning(UserWarning):
    """A probability model violates a restriction implied by utility maximisation."""
