"""Exception hierarchy shared by all modules."""


class PGNError(Exception):
    """Base class for every error raised by the package."""


class DomainError(PGNError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class NonIntegrable(PGNError):
    """A quadrature did not converge (integrand not integrable)."""


class MatchInfeasible(PGNError):
    """Cumulant matching preconditions fail for the requested order."""


class RootBracketError(PGNError):
    """A root could not be bracketed or the equation is degenerate."""


class TauTooLarge(PGNError):
    """The radial cut-off would exceed the support of the Levy measure."""


class RankDeficient(PGNError):
    """A matrix that must be positive definite is (numerically) singular."""


class CenteringUnavailable(PGNError):
    """The compound Poisson centering constant has no closed form."""


class HypothesisViolated(PGNError):
    """Hypotheses of the total variation bound are not met."""

    def __init__(self, failures):
        self.failures = list(failures)
        super().__init__("; ".join(self.failures))


class InsufficientSample(PGNError):
    """Too few draws for the requested estimator."""


class EmptySample(PGNError):
    """An empty sample was passed where data is required."""


class SchemaError(PGNError):
    """A JSON document does not follow the expected schema."""
