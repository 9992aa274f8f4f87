from typing import Optional


class Error(Exception):
    """Base geotrack Error."""

    def __init__(self, message, context: Optional[dict] = None) -> None:
        super().__init__(message)
        self.message = message
        if context:
            self.context = context


class UsageError(Error):
    """Raised when an invalid usage of the API or CLI is detected."""


class ShapeError(UsageError):
    """Raised when tensor dimensions do not agree."""


class CapacityError(UsageError):
    """Raised when an input exceeds a fixed model capacity (T_max, PE length, gallery size)."""


class EmptyInputError(UsageError):
    """Raised when an operation needs at least one item and got none."""


class ProtocolError(Error):
    """Raised when a training or inference protocol is violated."""


class DataError(Error):
    """Raised for malformed datasets, manifests and binary files."""

    def __init__(
        self,
        message,
        path: Optional[str] = None,
        line: Optional[int] = None,
        context: Optional[dict] = None,
    ) -> None:
        self.path = path
        self.line = line
        if path is not None:
            where = f"{path}:{line}" if line is not None else str(path)
            message = f"{where}: {message}"
        super().__init__(message, context)


class GeodesyError(DataError):
    """Raised for coordinates outside the supported projection domain."""
