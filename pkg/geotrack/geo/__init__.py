"""Geodesy, dataset manifests, the synthetic scene generator and GeoJSON export."""

from .dataset import (
    MANIFEST_NAME,
    DatasetManifest,
    ImageCache,
    IngestReport,
    LargeTile,
    SmallTile,
    VideoRecord,
    ingest,
    load_image,
    save_image,
)
from .geodesy import (
    MILES_THRESHOLD_M,
    GpsPoint,
    UtmPoint,
    gps_to_utm,
    haversine_m,
    utm_to_gps,
)
from .synthetic import SceneSpec, generate_scene

__all__ = [
    "DatasetManifest",
    "GpsPoint",
    "ImageCache",
    "IngestReport",
    "LargeTile",
    "MANIFEST_NAME",
    "MILES_THRESHOLD_M",
    "SceneSpec",
    "SmallTile",
    "UtmPoint",
    "VideoRecord",
    "generate_scene",
    "gps_to_utm",
    "haversine_m",
    "ingest",
    "load_image",
    "save_image",
    "utm_to_gps",
]
