"""Error hierarchy shared by every quadlab app.

Each error knows the process exit code the command line maps it to and
serialises to a flat dict for the single-line JSON error object.
"""


class QuadLabError(Exception):
    """Base class for quadlab errors"""

    code = 'quadlab_error'
    exit_code = 1

    def __init__(self, message, **details):
        super().__init__(message)
        self.message = message
        self.details = details

    def as_dict(self):
        return {'error': self.code, 'message': self.message, **self.details}


class DegenerateQuad(QuadLabError):
    code = 'degenerate_quad'
    exit_code = 2


class ConvexityError(DegenerateQuad):
    code = 'convexity_error'


class ParseError(QuadLabError):
    code = 'parse_error'
    exit_code = 2


class UsageError(QuadLabError):
    code = 'usage_error'
    exit_code = 2


class GridOutOfRange(UsageError):
    code = 'grid_out_of_range'


class InvalidIndex(QuadLabError):
    code = 'invalid_index'
    exit_code = 2


class IndexOutOfRange(InvalidIndex):
    code = 'index_out_of_range'


class PreconditionFailed(QuadLabError):
    code = 'precondition_failed'
    exit_code = 2


class FlagsNotSatisfied(PreconditionFailed):
    code = 'flags_not_satisfied'


class DerivativeUnavailable(QuadLabError):
    code = 'derivative_unavailable'
    exit_code = 2


class ConstructionFailed(QuadLabError):
    code = 'construction_failed'


class NotInElement(QuadLabError):
    code = 'not_in_element'


class NoConvergence(QuadLabError):
    code = 'no_convergence'


class SingularVandermonde(QuadLabError):
    code = 'singular_vandermonde'


class NumericalFailure(QuadLabError):
    code = 'numerical_failure'


class InternalError(QuadLabError):
    """Unexpected exception escaping a command"""

    code = 'internal_error'


class StudyFailed(QuadLabError):
    code = 'study_failed'
    exit_code = 3


class ConditionViolated(UserWarning):
    """Shape falls outside the sufficiency table for the requested (k, p)"""
