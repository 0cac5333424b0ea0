"""Exception hierarchy."""


class HeatBVError(Exception):
    """Base class for all errors raised by heatbv."""


class NonPositiveLength(HeatBVError, ValueError):
    pass


class ResolutionTooSmall(HeatBVError, ValueError):
    pass


class NonPositiveTime(HeatBVError, ValueError):
    pass


class SpectralTruncationInsufficient(HeatBVError, ValueError):
    pass


class UnsupportedGeometry(HeatBVError, ValueError):
    pass


class NoDerivativeSource(HeatBVError, ValueError):
    pass


class NoBoundaryOracle(HeatBVError, ValueError):
    pass


class UnsortedBreakpoints(HeatBVError, ValueError):
    pass


class PairBudgetExceeded(HeatBVError, RuntimeError):
    pass


class RadiusBelowResolution(HeatBVError, ValueError):
    pass


class WindowViolation(HeatBVError, ValueError):
    """Field is not constant in the boundary margin of an open grid."""


class ResolutionGuardViolated(HeatBVError, ValueError):
    pass


class DegenerateFit(HeatBVError, ValueError):
    pass


class SpaceTooLarge(HeatBVError, ValueError):
    pass


class ConfigError(HeatBVError, ValueError):
    """Malformed or incomplete experiment configuration."""
