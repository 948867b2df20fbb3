"""Exception hierarchy shared by all pipeline stages."""


class NilSymError(Exception):
    """Base class for every error raised by this package."""


class TauMismatch(NilSymError, ValueError):
    pass


class SingularMatrix(NilSymError, ValueError):
    pass


class TruncationOverflow(NilSymError):
    """Discarded Laurent tail exceeded the configured tolerance."""


class NonInvertibleLoop(NilSymError):
    pass


class OutsideBigCell(NilSymError):
    """Birkhoff factorization is numerically unavailable."""


class NonConformal(NilSymError, ValueError):
    pass


class GridTooSmall(NilSymError, ValueError):
    pass


class PoleEncountered(NilSymError):
    pass


class StiffIntegration(NilSymError):
    pass


class GaugeError(NilSymError):
    """v_minus at lambda = infinity is not real within tolerance."""


class UnknownPreset(NilSymError, KeyError):
    pass


class ParameterOutOfRange(NilSymError, ValueError):
    pass


class ConfigError(NilSymError, ValueError):
    """Malformed job configuration; carries line/column when known."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)


class IntegrabilityError(NilSymError, ValueError):
    """Input data violate the compatibility condition of the frame equations."""


class NotTwisted(NilSymError, ValueError):
    """Coefficients break the even-diagonal / odd-off-diagonal pattern."""
