"""Exception hierarchy shared by all modules.

Each class carries an ``exit_code`` so the command line runner can map a
failure to the documented process status without a lookup table.
"""


class DyadicError(Exception):
    exit_code = 1


class InvalidParamsError(DyadicError, ValueError):
    exit_code = 2


class InvalidStateError(DyadicError, ValueError):
    exit_code = 2


class InsufficientModesError(DyadicError, ValueError):
    exit_code = 2


class HypothesisViolation(DyadicError):
    """Initial data (or a parameter) does not satisfy the hypothesis of a check."""

    exit_code = 2


class UnsupportedKindError(DyadicError, ValueError):
    exit_code = 2


class StiffnessFailure(DyadicError):
    """The adaptive step size underflowed."""

    exit_code = 3

    def __init__(self, message, t=None, mode=None):
        super().__init__(message)
        self.t = t
        self.mode = mode


class ShootingBracketError(DyadicError):
    exit_code = 3


class PrecisionExhaustedError(DyadicError):
    exit_code = 3

    def __init__(self, message, max_length=None):
        super().__init__(message)
        self.max_length = max_length


class InvalidAuxError(DyadicError, ValueError):
    exit_code = 2


class CheckFailure(DyadicError):
    exit_code = 4
