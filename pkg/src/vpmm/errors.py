"""Exception hierarchy and the absorbing infinite-energy marker."""

from __future__ import annotations


class VpmmError(Exception):
    """Base class for all package errors."""


class DeterminantNotPositive(VpmmError, ValueError):
    """A matrix argument left GL+(d), i.e. its determinant is not positive."""


# Alias used by the constitutive layer.
NonPositiveDeterminant = DeterminantNotPositive


class DimensionMismatch(VpmmError, ValueError):
    pass


class InfiniteEnergyState(VpmmError, ValueError):
    """A derivative was requested at a state with infinite energy."""


class InnerSolverDiverged(VpmmError, RuntimeError):
    """The deformation solve hit its iteration cap above tolerance."""

    def __init__(self, message, grad_norm=None, iterations=None):
        super().__init__(message)
        self.grad_norm = grad_norm
        self.iterations = iterations


class StepRejected(VpmmError, RuntimeError):
    """An incremental step could not be certified.

    ``trajectory`` holds the accepted prefix when raised from a run.
    """

    def __init__(self, message, trajectory=None, dump=None):
        super().__init__(message)
        self.trajectory = trajectory
        self.dump = dump or {}


class TimeOutOfRange(VpmmError, ValueError):
    pass


class ConfigError(VpmmError, ValueError):
    pass


class SchemaMismatch(VpmmError, ValueError):
    pass


class VpmmIOError(VpmmError, OSError):
    """Unreadable or truncated file; ``row`` is the offending data row if known."""

    def __init__(self, message, row=None):
        super().__init__(message)
        self.row = row


class _Infinite:
    """Singleton standing for +inf energy.

    It is not a float: it compares above every real number and absorbs
    addition, so a sum of energy contributions stays infinite once any
    term is.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFINITE"

    def __float__(self):
        return float("inf")

    def __add__(self, other):
        if other is self or _is_real(other):
            return self
        return NotImplemented

    __radd__ = __add__

    def __sub__(self, other):
        if _is_real(other):
            return self
        raise ArithmeticError("INFINITE - INFINITE is undefined")

    def __rsub__(self, other):
        raise ArithmeticError("finite - INFINITE is not an energy")

    def __mul__(self, other):
        if _is_real(other) and other > 0:
            return self
        raise ArithmeticError("INFINITE may only be scaled by positive reals")

    __rmul__ = __mul__

    def __lt__(self, other):
        return False

    def __le__(self, other):
        return other is self

    def __gt__(self, other):
        return other is not self

    def __ge__(self, other):
        return True

    def __eq__(self, other):
        return other is self

    def __hash__(self):
        return hash("vpmm.INFINITE")

    def __reduce__(self):
        return (_Infinite, ())


def _is_real(x):
    try:
        return float(x) == float(x) and abs(float(x)) != float("inf")
    except (TypeError, ValueError):
        return False


INFINITE = _Infinite()


def is_infinite(value) -> bool:
    return value is INFINITE
