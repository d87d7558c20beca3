"""Exception hierarchy shared by every lqgopt module."""


class LqgError(Exception):
    """Base class for all lqgopt errors."""


class NonConvergence(LqgError):
    pass


class IndefiniteResult(LqgError):
    pass


class SingularInnerMatrix(LqgError):
    pass


class UnstableSystem(LqgError):
    """A ground-truth plant violates rho(A) < 1 or minimality."""


class UnstableClosedLoop(LqgError):
    pass


class NonFiniteInput(LqgError):
    pass


class NonFiniteState(LqgError):
    pass


class DivergenceDetected(LqgError):
    pass


class InsufficientHistory(LqgError):
    pass


class DomainError(LqgError):
    pass


class DimensionMismatch(LqgError):
    pass


class RankDeficient(LqgError):
    pass


class SingularAhat(LqgError):
    pass


class NoFeasibleCandidate(LqgError):
    pass


class DegradedEpoch(LqgError):
    """SysId or the optimistic search failed; the previous controller is kept."""


class InsufficientPoints(LqgError):
    pass


class ConfigError(LqgError):
    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
