"""Exception hierarchy shared by all modules."""


class NibmError(Exception):
    """Base class for errors raised by nibmlab."""


class PoleError(NibmError, ValueError):
    """Evaluation point coincides with an atom of a discrete measure."""


class DivergentIntegralError(NibmError, ValueError):
    pass


class CollisionError(NibmError, ValueError):
    """Atoms too close together (or ordering lost after displacement)."""


class RegimeError(NibmError, ValueError):
    pass


class OutOfRangeError(NibmError, ValueError):
    pass


class PrecisionError(NibmError, ArithmeticError):
    """Catastrophic cancellation detected; rerun with a stronger precision policy."""


class ConvergenceError(NibmError, RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message if residual is None else f"{message} (residual {residual:.3e})")
        self.residual = residual


class ConsistencyError(NibmError, RuntimeError):
    pass
