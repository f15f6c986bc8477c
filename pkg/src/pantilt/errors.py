"""Exception hierarchy shared across the package."""


class PanTiltError(Exception):
    """Base class for all package errors."""


class NumericalError(PanTiltError):
    """A computation could not produce a meaningful result."""


class InvalidAxisError(NumericalError, ValueError):
    pass


class DegenerateGeometryError(NumericalError):
    """Points are collinear, coincident or too few for the requested fit."""


class DegenerateFitError(NumericalError):
    """Pulse/angle regression has fewer than two distinct pulse values."""


class DegenerateSystemError(NumericalError):
    """Linear system is rank deficient in its angle columns."""


class ParseError(PanTiltError, ValueError):
    """Malformed input file. Carries the path and 1-based line number."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        super().__init__(where + message)


class ConfigError(PanTiltError, ValueError):
    pass


class ExtrapolationWarning(UserWarning):
    """A pulse width outside the calibrated range was mapped to an angle."""
