"""Exception hierarchy shared by every module."""


class HomotypeError(Exception):
    """Base class for all library errors."""


class InvalidParams(HomotypeError, ValueError):
    pass


class NonSymmetricDistance(HomotypeError, ValueError):
    pass


class ZeroDistanceDistinctPoints(HomotypeError, ValueError):
    pass


class UnknownPoint(HomotypeError, KeyError):
    pass


class InvalidDelta(HomotypeError, ValueError):
    pass


class PropertyViolation(HomotypeError):
    """A dyadic lattice failed one of its structural properties."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class EmptyCube(HomotypeError):
    pass


class NumericalRankLoss(HomotypeError):
    pass


class SystemMismatch(HomotypeError, ValueError):
    pass


class NonPositiveWeight(HomotypeError, ValueError):
    pass


class EmptyFamily(HomotypeError, ValueError):
    pass


class InconsistentSpaces(HomotypeError, ValueError):
    pass


class EmptyTarget(HomotypeError, ValueError):
    pass


class SeriesNotConverging(HomotypeError):
    pass


class NotInteriorCoverable(HomotypeError):
    pass


class ConfigInvalid(HomotypeError, ValueError):
    pass


class NormalizationFailure(HomotypeError):
    pass


class MissingReport(HomotypeError, FileNotFoundError):
    pass
