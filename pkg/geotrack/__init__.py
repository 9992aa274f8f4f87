"""geotrack - desk-scale cross-view video geo-localization.

Street-view videos are localized against aerial imagery in two steps: a
whole video is matched to a large aerial region, then every frame to a
small tile inside it, and a temporally consistent trajectory is picked
from the per-frame candidates.
"""

__version__ = "0.1.0"

from geotrack.errors import (
    CapacityError,
    DataError,
    EmptyInputError,
    Error,
    GeodesyError,
    ProtocolError,
    ShapeError,
    UsageError,
)

__all__ = [
    "CapacityError",
    "DataError",
    "EmptyInputError",
    "Error",
    "GeodesyError",
    "ProtocolError",
    "ShapeError",
    "UsageError",
    "__version__",
]
