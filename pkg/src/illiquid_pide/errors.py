"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class PideError(Exception):
    """Base class for every error raised by this package."""


class SingularityError(PideError, ValueError):
    """Density evaluated at a point where it is not defined."""


class NoEnvelopeError(PideError, ValueError):
    pass


class IntegrabilityError(PideError, ValueError):
    """An exponential moment of the Levy measure diverges."""


class ActivityClassError(PideError, ValueError):
    """Finite-activity operation applied to an infinite-activity measure (or vice versa)."""


class ContractionError(PideError, RuntimeError):
    """Fixed-point iteration did not converge within its budget."""


class BlowUpError(PideError, ValueError):
    """Feedback denominator 1 - rho * S dphi/dS is not positive."""


class XiDomainError(PideError, ValueError):
    """A jump would move the asset price to a nonpositive value."""


class SchemeError(PideError, RuntimeError):
    """The finite-difference march could not proceed."""


class BandError(PideError, ValueError):
    """Spot lies outside the interior band of the solver grid."""


class NoSolutionError(PideError, ValueError):
    """Implied volatility requested for a price outside the no-arbitrage band."""


class ConfigError(PideError, ValueError):
    """Run configuration violates one or more constraints."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
