from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, Optional

from . import (
    CapacityError,
    DataError,
    EmptyInputError,
    Error,
    GeodesyError,
    ProtocolError,
    ShapeError,
    UsageError,
)


class ErrorCode(Enum):
    UNKNOWN = "UNKNOWN"
    USAGE = "USAGE"
    SHAPE = "SHAPE"
    CAPACITY = "CAPACITY"
    EMPTY = "EMPTY"
    PROTOCOL = "PROTOCOL"
    DATA = "DATA"
    GEODESY = "GEODESY"


@dataclass
class ErrorInfo:
    """Serializable error information, used in JSON reports."""

    code: ErrorCode
    message: str

    def to_dict(self) -> Dict[str, Any]:
        return {"code": self.code.value, "message": self.message}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ErrorInfo":
        return cls(
            code=ErrorCode(data.get("code", "UNKNOWN")),
            message=data.get("message", ""),
        )


to_exception_map = {
    ErrorCode.UNKNOWN: Error,
    ErrorCode.USAGE: UsageError,
    ErrorCode.SHAPE: ShapeError,
    ErrorCode.CAPACITY: CapacityError,
    ErrorCode.EMPTY: EmptyInputError,
    ErrorCode.PROTOCOL: ProtocolError,
    ErrorCode.DATA: DataError,
    ErrorCode.GEODESY: GeodesyError,
}

from_exception_map = {v: k for k, v in to_exception_map.items()}


class ErrorHandler:
    """Converts error records to exceptions and vice versa."""

    @staticmethod
    def to_exception(error: ErrorInfo) -> Optional[Error]:
        """Convert an error record to an exception.

        Args:
            error: The error to convert.

        Returns:
            The corresponding exception, or None for an empty message.
        """
        if not error.message:
            return None
        return to_exception_map.get(error.code, Error)(error.message)

    @classmethod
    def from_exception(cls, exc: Error) -> ErrorInfo:
        """Convert a geotrack error to an error record.

        Args:
            exc: The exception to convert.

        Returns:
            The corresponding error record.
        """
        if not isinstance(exc, Error):
            raise TypeError("exc must be a subclass of geotrack.errors.Error")

        code = ErrorCode.UNKNOWN
        for subclass in type(exc).__mro__:
            if subclass in from_exception_map:
                code = from_exception_map[subclass]
                break
        return ErrorInfo(code=code, message=str(exc))
