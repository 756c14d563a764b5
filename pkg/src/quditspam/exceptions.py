"""Exception hierarchy for quditspam."""


class SpamError(Exception):
    """Base class for every error raised by this package."""


class NormalizationViolation(SpamError, ValueError):
    pass


class ScaleTooLarge(SpamError, ValueError):
    pass


class HeraldImpossible(SpamError):
    pass


class DivergentInverse(SpamError, ZeroDivisionError):
    pass


class GaugeInfeasible(SpamError):
    pass


class InfeasibleEstimate(SpamError):
    pass


class IndexOutOfRange(SpamError, IndexError):
    pass


class DominantOutcome(SpamError, ValueError):
    pass


class RankDeficientDesign(SpamError):
    pass


class EmptyCounts(SpamError, ValueError):
    pass


class WrongDimension(SpamError, ValueError):
    pass


class NonPositiveData(SpamError):
    pass


class DivisionUnstable(SpamError):
    pass


class IncompleteSet(SpamError, ValueError):
    pass
