"""Exception types raised by the beamforming toolkit."""


class HybridBFError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(HybridBFError, ValueError):
    pass


class DegenerateRankError(HybridBFError):
    """A factor or channel has no usable (nonzero) singular values."""


class InfeasibleStreamsError(HybridBFError):
    """The channel rank is smaller than the requested number of streams."""


class NumericalFailureError(HybridBFError, ArithmeticError):
    pass


class CalibrationError(HybridBFError):
    """Noise variance cannot be calibrated because the received signal vanishes."""
