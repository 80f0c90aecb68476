"""Exception types shared across the package."""


class ErmLabError(Exception):
    """Base class for all package errors."""


class MissingField(ErmLabError):
    pass


class NonPositiveParameter(ErmLabError):
    pass


class SparsityExceedsAmbient(ErmLabError):
    pass


class DimensionMismatch(ErmLabError):
    pass


class SupBoundViolated(ErmLabError):
    pass


class UnsupportedNormModeForClass(ErmLabError):
    pass


class UnsupportedClassKind(ErmLabError):
    pass


class SolverNonConvergence(ErmLabError):
    """Iterative solver exhausted its iteration budget."""


class TooLargeForEnumeration(ErmLabError):
    pass


class NoCrossingInRange(ErmLabError):
    pass


class NoCrossing(ErmLabError):
    pass


class RankDeficient(ErmLabError):
    pass


class SingularSystem(ErmLabError):
    pass


class ShapeMismatch(ErmLabError):
    pass


class DegenerateProbe(ErmLabError):
    pass


class NonPositiveWeight(ErmLabError):
    pass


class WeightErrorTooLarge(ErmLabError):
    """chi-square weight error outside the regret-transfer guarantee's validity range."""


class MissingNuisanceValue(ErmLabError):
    pass


class FoldTooSmall(ErmLabError):
    pass


class ClipSaturation(UserWarning):
    """More than 1% of propensities hit the clipping bounds."""


class InsufficientGrid(ErmLabError):
    pass


class EmptyBin(ErmLabError):
    pass


class QuadratureUnsupportedDimension(ErmLabError):
    pass


class ConfigError(ErmLabError):
    """Invalid or unparsable run configuration."""


class NoRecordsFound(ErmLabError):
    pass
