"""Exception types raised across the package.

Precondition failures derive from :class:`ValidationError` (also a
``ValueError``); failures of an otherwise valid computation derive from
:class:`RuntimeFailure`.  The CLI maps the two families to exit codes 1 and 2.
"""


class SubspaceMemoryError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SubspaceMemoryError, ValueError):
    pass


class RuntimeFailure(SubspaceMemoryError, RuntimeError):
    pass


# dataset
class InfeasibleSpec(ValidationError):
    pass


class RetryBudgetExhausted(RuntimeFailure):
    pass


class CountExceedsCapacity(ValidationError):
    pass


class AllCandidatesRejected(RuntimeFailure):
    pass


class WeightTooLarge(ValidationError):
    pass


# learner
class ZeroMatrix(ValidationError):
    pass


class PartialRun(RuntimeFailure):
    """A learning run that stopped early.

    The last iterate and residual trace are attached so callers can still
    inspect (or accept) a partially converged vector.
    """

    def __init__(self, message, w=None, trace=None):
        super().__init__(message)
        self.w = w
        self.trace = trace


class NoConvergence(PartialRun):
    pass


class DegenerateZero(RuntimeFailure):
    pass


class LambdaOutOfRange(PartialRun):
    pass


class InsufficientRows(RuntimeFailure):
    pass


# recall / analysis
class DimensionMismatch(ValidationError):
    pass


class ZeroColumn(ValidationError):
    pass


class VacuousBound(ValidationError):
    pass
