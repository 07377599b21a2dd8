"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
1 for validation or domain infeasibility, 2 for numerical failure.
"""


class InvStabError(Exception):
    exit_code = 1


class ParseError(InvStabError):
    pass


class ValidationError(InvStabError):
    pass


class UnknownLine(InvStabError):
    pass


class Infeasible(InvStabError):
    pass


class EmptyRegion(InvStabError):
    pass


class FirstStageUncertified(InvStabError):
    pass


class NumericalError(InvStabError):
    exit_code = 2


class SingularityError(NumericalError):
    pass


class NonConvergence(NumericalError):
    pass


class SingularJacobian(NumericalError):
    pass


class NonFinite(NumericalError):
    pass


class NotConverged(NumericalError):
    pass


class Unbounded(NumericalError):
    pass


class StageLimitExceeded(NumericalError):
    pass


class StageTimeout(NumericalError):
    pass
