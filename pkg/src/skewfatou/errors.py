"""Exception hierarchy.

Computational failures derive from :class:`ComputationError` (CLI exit code 1);
bad inputs and unmet preconditions derive from :class:`UsageError` (exit code 2).
"""


class SkewFatouError(Exception):
    pass


class UsageError(SkewFatouError, ValueError):
    pass


class ComputationError(SkewFatouError, ArithmeticError):
    pass


class PreconditionError(UsageError):
    pass


class SingularSystem(ComputationError):
    pass


class NotNormalized(PreconditionError):
    """g(0, 0) != 0."""


class NotSplit(PreconditionError):
    """The map has mixed t*z terms but a split-form operation was requested."""


class NotResonant(PreconditionError):
    """mu != 1/lambda."""


class NotCriticallyFinite(ComputationError):
    pass


class NoConvergence(ComputationError):
    def __init__(self, message, differences=()):
        super().__init__(message)
        self.differences = list(differences)


class PrecisionExhausted(ComputationError):
    pass


class OutOfDomain(ComputationError):
    pass


class DegenerateSamples(ComputationError):
    pass


class NoDegenerateForm(ComputationError):
    pass


class NotFound(ComputationError):
    pass


class InconsistentOrbit(ComputationError):
    pass


class EscapedOrbit(ComputationError):
    def __init__(self, message, index=None, record=None):
        super().__init__(message)
        self.index = index
        self.record = record
