"""GeoJSON export of predicted trajectories."""

import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

from geotrack.consistent.candidates import TrajectoryPrediction
from geotrack.errors import DataError
from geotrack.utils.json_serialization import json_dump_safer

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


def trajectory_features(pred: TrajectoryPrediction) -> Dict[str, Any]:
    """FeatureCollection: one LineString (two or more frames) plus one Point per frame.

    Coordinates are ``[lon, lat]``.
    """
    coords = [[float(lon), float(lat)] for lat, lon in pred.gps]
    features: List[Dict[str, Any]] = []
    if len(coords) > 1:
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "LineString", "coordinates": coords},
                "properties": {
                    "kind": "trajectory",
                    "method": pred.method,
                    "video_id": pred.video_id,
                    "objective": pred.objective,
                    "lambda": pred.lam,
                },
            }
        )
    for i, point in enumerate(coords):
        features.append(
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": point},
                "properties": {
                    "kind": "frame",
                    "frame": i,
                    "choice": pred.choices[i],
                    "tile_id": pred.ids[i] if i < len(pred.ids) else None,
                    "sim": pred.sims[i] if i < len(pred.sims) else None,
                },
            }
        )
    return {
        "type": "FeatureCollection",
        "properties": {"method": pred.method, "video_id": pred.video_id, "frames": len(coords)},
        "features": features,
    }


def export_trajectory(pred: TrajectoryPrediction, path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json_dump_safer(trajectory_features(pred), f, indent=1)
    logger.info("wrote %d-frame %s trajectory to %s", len(pred), pred.method, path)
    return path


def read_trajectory(path: PathLike) -> List[Tuple[float, float]]:
    """Per-frame ``(lat, lon)`` from the Point features of an exported file, in frame order."""
    path = Path(path)
    if not path.exists():
        raise DataError("trajectory file not found", path=str(path))
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"invalid JSON: {e.msg}", path=str(path), line=e.lineno) from e
    if data.get("type") != "FeatureCollection":
        raise DataError("not a GeoJSON FeatureCollection", path=str(path))
    frames = []
    for feature in data.get("features", []):
        geometry = feature.get("geometry") or {}
        if geometry.get("type") != "Point":
            continue
        lon, lat = geometry["coordinates"][:2]
        frames.append((int(feature.get("properties", {}).get("frame", len(frames))), float(lat), float(lon)))
    frames.sort(key=lambda item: item[0])
    return [(lat, lon) for _, lat, lon in frames]
