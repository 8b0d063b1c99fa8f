"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`SLHJBError`
and carries a short ``kind`` tag, which the CLI prints on its machine-readable
error line.
"""


class SLHJBError(Exception):
    kind = "error"


class InvalidOrderError(SLHJBError, ValueError):
    kind = "invalid-order"


class CapacityError(SLHJBError, ValueError):
    kind = "capacity"


class ReductionError(SLHJBError, RuntimeError):
    """Carathéodory elimination could not proceed.

    ``partial`` holds the rule as it stood when the failing step was attempted.
    """

    kind = "reduction-failed"

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial


class InvalidPointError(SLHJBError, ValueError):
    kind = "invalid-point"


class ConfigurationError(SLHJBError, ValueError):
    kind = "configuration"


class InvalidModelError(SLHJBError, ValueError):
    kind = "invalid-model"


class UnsupportedError(SLHJBError, ValueError):
    kind = "unsupported"


class NumericalBlowupError(SLHJBError, FloatingPointError):
    kind = "numerical-blowup"

    def __init__(self, message, n=None, m=None, a=None):
        super().__init__(message)
        self.n, self.m, self.a = n, m, a


class InsufficientDataError(SLHJBError, ValueError):
    kind = "insufficient-data"


class InvalidIntervalError(SLHJBError, ValueError):
    kind = "invalid-interval"
