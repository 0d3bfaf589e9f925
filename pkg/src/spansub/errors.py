"""Exception types shared across the package."""
from __future__ import annotations


class SpansubError(Exception):
    """Base class for all package errors."""


class InfeasibleError(SpansubError, ValueError):
    """Inputs admit no solution (odd degree sum, empty length window, ...)."""


class PreconditionError(SpansubError, ValueError):
    """A documented precondition of an operation does not hold."""


class GraphFormatError(SpansubError, ValueError):
    """Malformed edge-list or subdivision text."""


class RetryBudgetExhausted(SpansubError):
    """A rejection sampler ran out of attempts."""

    def __init__(self, message: str, attempts: int):
        super().__init__(message)
        self.attempts = attempts


class BudgetExceeded(SpansubError):
    """An exhaustive enumeration would exceed its configured budget."""


class ConvergenceError(SpansubError):
    """An iterative eigensolver did not converge within its cap."""


class MixingViolation(SpansubError):
    """A set pair broke the mixing-lemma bound."""

    def __init__(self, A, B, deviation: float, bound: float):
        super().__init__(f"|e(A,B) - d|A||B|/n| = {deviation:.6g} exceeds {bound:.6g}")
        self.A = A
        self.B = B
        self.deviation = deviation
        self.bound = bound


class CertificateError(SpansubError, AssertionError):
    """A certified bound was contradicted by a computed object."""


class SearchExhausted(SpansubError):
    """A randomized search gave up after its restart budget."""

    def __init__(self, message: str, restarts: int = 0):
        super().__init__(message)
        self.restarts = restarts


class JoinednessFalsified(SpansubError):
    """Two vertex sets with no edge between them were found."""

    def __init__(self, message: str, X, Y):
        super().__init__(message)
        self.X = X
        self.Y = Y


class MatchingFailure(SpansubError):
    """No perfect matching; ``witness`` is a Hall-violating set."""

    def __init__(self, message: str, witness):
        super().__init__(message)
        self.witness = witness


class StageFailure(SpansubError):
    """A pipeline stage could not complete."""

    def __init__(self, stage: str, reason: str):
        super().__init__(f"{stage}: {reason}")
        self.stage = stage
        self.reason = reason
