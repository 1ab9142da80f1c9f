"""Exception hierarchy shared by all modules."""


class GcmasterError(Exception):
    """Base class for every error raised by the package."""


class InvalidParams(GcmasterError, ValueError):
    pass


class ConfigError(GcmasterError, ValueError):
    pass


class TailNotConverged(GcmasterError):
    """The summability witness cannot certify a truncated partition sum."""


class OverflowRisk(GcmasterError, OverflowError):
    """An exponent exceeds the configured magnitude cap."""


class DimensionMismatch(GcmasterError, ValueError):
    pass


class IndexOutOfRange(GcmasterError, IndexError):
    pass


class SameIndex(GcmasterError, ValueError):
    pass


class SpectralConditionViolated(GcmasterError):
    pass


class RootNotBracketed(GcmasterError):
    pass


class PoleHit(GcmasterError, ZeroDivisionError):
    pass


class DegenerateDenominator(GcmasterError, ZeroDivisionError):
    pass


class NoConvergence(GcmasterError):
    pass


class UnstableStep(GcmasterError):
    pass


class ShrinkTooSevere(GcmasterError):
    """Positivity forced the excited-mode coefficients below the usable floor."""


# same condition, named after the subspace-initial-data operation
AllCoeffsZeroAfterShrink = ShrinkTooSevere


class GridTooShort(GcmasterError, ValueError):
    pass


class DegenerateFit(GcmasterError):
    pass
