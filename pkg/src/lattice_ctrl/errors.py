"""Exception hierarchy shared by all modules."""


class LatticeCtrlError(Exception):
    """Base class for every error raised by this package."""


class DomainError(LatticeCtrlError, ValueError):
    """An argument is outside the operation's domain (range, shape, modulus)."""


class ParameterError(LatticeCtrlError, ValueError):
    """A cryptosystem or quantization parameter violates its invariants."""


class CapacityError(LatticeCtrlError):
    """The required modulus exceeds the 2**62 word-size budget."""


class ConditioningError(LatticeCtrlError):
    """A transformation matrix is too ill-conditioned to trust."""


class ProtocolError(LatticeCtrlError):
    """A multi-party protocol step was invoked out of order."""
