"""Exception types raised across the package."""


class RemdmError(Exception):
    """Base class for all errors raised by :mod:`remdm`."""


class InvalidParameterError(RemdmError, ValueError):
    """A parameter lies outside its documented range."""


class DegenerateTimeError(InvalidParameterError):
    """A kernel denominator vanishes at the requested noise levels."""


class OutOfSimplexError(InvalidParameterError):
    """Kernel coefficients would leave the probability simplex."""


class InconsistentEvidenceError(RemdmError, ValueError):
    """No support sequence of the joint agrees with the observed tokens."""


class JointFormatError(RemdmError, ValueError):
    """A joint-distribution file could not be parsed."""
