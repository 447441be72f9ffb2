"""Exception types raised across the package."""


class KineticFlowsError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(KineticFlowsError, ValueError):
    pass


class SizeMismatch(KineticFlowsError, ValueError):
    pass


class CapExceeded(KineticFlowsError, ValueError):
    """Point count exceeds the exact-assignment cap; subsample and retry."""


class ZeroVector(KineticFlowsError, ValueError):
    pass


class MissingAux(KineticFlowsError, ValueError):
    """A mean-field rate was requested without the position marginal."""


class DegenerateCutoff(KineticFlowsError, ValueError):
    """The angular window [zeta_min, pi] has zero or infinite mass."""


class NegativeDuration(KineticFlowsError, ValueError):
    pass


class QuadratureUnderResolved(KineticFlowsError, RuntimeError):
    pass


class ConfigError(KineticFlowsError, ValueError):
    pass


class ThresholdFailure(KineticFlowsError, RuntimeError):
    def __init__(self, criterion: str, detail: str = ""):
        self.criterion = criterion
        super().__init__(f"{criterion}: {detail}" if detail else criterion)
