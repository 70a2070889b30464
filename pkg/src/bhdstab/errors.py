"""Exception hierarchy. Every error raised on purpose by the toolkit derives
from :class:`BHDError` so the CLI can map it to a nonzero exit status."""


class BHDError(Exception):
    """Base class for toolkit errors."""


class PositiveRealPartEigenvalue(BHDError):
    """The plant has an eigenvalue with positive real part (not admissible)."""


class NonPositiveParameter(BHDError, ValueError):
    pass


class NonPositiveGain(BHDError, ValueError):
    pass


class DimensionMismatch(BHDError, ValueError):
    pass


class NotControllable(BHDError):
    pass


class NotStabilizable(BHDError):
    pass


class IllConditioned(BHDError):
    pass


class ZeroK2(BHDError, ValueError):
    """Saturated linear feedback with k2 == 0 (closed loop cannot be Hurwitz)."""


class InvalidOrder(BHDError, ValueError):
    pass


class OrderTooHigh(BHDError, ValueError):
    pass


class NonSmoothDescriptor(BHDError):
    """Requested more derivatives than the feedback has."""


class TooFewSamples(BHDError, ValueError):
    pass


class StepSizeUnderflow(BHDError):
    pass


class Divergence(BHDError):
    pass


class MissingJets(BHDError):
    pass


class TuningFailed(BHDError):
    pass


class NonConvergent(BHDError):
    pass


class ConfigError(BHDError):
    pass


class GainOutOfRange(BHDError, ValueError):
    """A gain above one (schedules live in (0, 1])."""
