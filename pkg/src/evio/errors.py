"""Exception types for contract violations raised across the package."""


class EvioError(ValueError):
    """Base class for all package-specific errors."""


class BoundsError(EvioError):
    """Event or pixel coordinates outside the sensor area."""


class ParameterError(EvioError):
    """A parameter violates its documented precondition."""


class CheiralityError(EvioError):
    """A reconstructed point has non-positive depth."""


class DegenerateGeometryError(EvioError):
    """Geometry too close to a singular configuration (zero baseline, parallel planes)."""


class OrderingError(EvioError):
    """Timestamped input is not sorted as required."""


class InsufficientDataError(EvioError):
    """Not enough samples/overlap to carry out the operation."""


class ParseError(EvioError):
    """Malformed input file; message carries file name and line number."""

    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line
