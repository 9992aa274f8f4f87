__all__ = (
    "Error",
    "UsageError",
    "ShapeError",
    "CapacityError",
    "EmptyInputError",
    "ProtocolError",
    "DataError",
    "GeodesyError",
)

from .errors import (
    CapacityError,
    DataError,
    EmptyInputError,
    Error,
    GeodesyError,
    ProtocolError,
    ShapeError,
    UsageError,
)
