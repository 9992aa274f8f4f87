"""Dataset manifest models, ingestion and image loading.

A dataset directory holds ``manifest.json`` plus PNG files referenced by
relative paths. The manifest lists the small-aerial tiles, the large-aerial
tiles (each owning k x k small tiles) and the street-view videos; every
video frame names its ground-truth small tile and every video one large tile.
"""

from __future__ import annotations

import json
import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from PIL import Image
from pydantic import BaseModel, Field, ValidationError, field_validator

from geotrack.errors import DataError, GeodesyError

from .geodesy import GpsPoint, utm_zone

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1

PathLike = Union[str, os.PathLike]


class Bounds(BaseModel):
    """Geographic bounding box in degrees."""

    min_lat: float
    min_lon: float
    max_lat: float
    max_lon: float

    def contains(self, lat: float, lon: float, tol: float = 1e-9) -> bool:
        return (
            self.min_lat - tol <= lat <= self.max_lat + tol
            and self.min_lon - tol <= lon <= self.max_lon + tol
        )


class SmallTile(BaseModel):
    """One small aerial image (the per-frame ground-truth unit)."""

    id: str
    path: str
    lat: float
    lon: float
    bounds: Bounds
    parent: Optional[str] = None


class LargeTile(BaseModel):
    """One large aerial image made of k x k small tiles, children listed row-major."""

    id: str
    path: str
    lat: float
    lon: float
    bounds: Bounds
    children: List[str] = Field(default_factory=list)


class VideoRecord(BaseModel):
    """One street-view video: frames, per-frame GPS and ground-truth tiles."""

    id: str
    frames: List[str]
    gps: List[Tuple[float, float]]
    small_tiles: List[str]
    large_tile: str
    split: str = "train"

    @field_validator("split")
    @classmethod
    def _known_split(cls, value: str) -> str:
        if value not in ("train", "val", "test"):
            raise ValueError(f"unknown split {value!r}")
        return value


class DatasetManifest(BaseModel):
    """Validated contents of ``manifest.json``."""

    version: int = MANIFEST_VERSION
    utm_zone: int
    hemisphere: str = "N"
    tile_px: int
    k: int
    meters_per_pixel: float
    seed: Optional[int] = None
    scene: Dict[str, object] = Field(default_factory=dict)
    small_tiles: List[SmallTile] = Field(default_factory=list)
    large_tiles: List[LargeTile] = Field(default_factory=list)
    videos: List[VideoRecord] = Field(default_factory=list)

    def small_by_id(self) -> Dict[str, SmallTile]:
        return {t.id: t for t in self.small_tiles}

    def large_by_id(self) -> Dict[str, LargeTile]:
        return {t.id: t for t in self.large_tiles}

    def split(self, name: str) -> List[VideoRecord]:
        return [v for v in self.videos if v.split == name]


@dataclass
class IngestReport:
    """Non-fatal findings collected while ingesting a dataset."""

    path: str
    warnings: List[str] = field(default_factory=list)

    def warn(self, message: str) -> None:
        logger.warning("%s: %s", self.path, message)
        self.warnings.append(message)


def _line_of(text: str, needle: str) -> Optional[int]:
    index = text.find(needle)
    if index < 0:
        return None
    return text.count("\n", 0, index) + 1


def _id_line(text: str, item_id: str) -> Optional[int]:
    match = re.search(r'"id"\s*:\s*"' + re.escape(item_id) + '"', text)
    return text.count("\n", 0, match.start()) + 1 if match else None


def ingest(path: PathLike, check_files: bool = True) -> Tuple[DatasetManifest, IngestReport]:
    """Load and validate a dataset manifest.

    Args:
        path: The manifest file or the dataset directory containing it.
        check_files: Verify that every referenced image exists.

    Returns:
        The manifest and a report of warnings (frames outside their tiles).

    Raises:
        DataError: On parse errors, missing files, count mismatches, GPS out
            of range or videos crossing UTM zones. Messages carry file:line.
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise DataError("manifest not found", path=str(path))
    text = path.read_text(encoding="utf-8")
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise DataError(f"invalid JSON: {e.msg}", path=str(path), line=e.lineno) from e
    try:
        manifest = DatasetManifest.model_validate(raw)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(part) for part in first["loc"])
        raise DataError(f"invalid manifest field {loc}: {first['msg']}", path=str(path)) from e

    report = IngestReport(path=str(path))
    root = path.parent
    small = manifest.small_by_id()
    large = manifest.large_by_id()
    if len(small) != len(manifest.small_tiles):
        raise DataError("duplicate small tile ids", path=str(path))
    if len(large) != len(manifest.large_tiles):
        raise DataError("duplicate large tile ids", path=str(path))

    def fail(message: str, item_id: str) -> DataError:
        return DataError(message, path=str(path), line=_id_line(text, item_id))

    for tile in manifest.large_tiles:
        if len(tile.children) != manifest.k * manifest.k:
            raise fail(f"large tile {tile.id} has {len(tile.children)} children, expected {manifest.k ** 2}", tile.id)
        for child in tile.children:
            if child not in small:
                raise fail(f"large tile {tile.id} lists unknown child {child}", tile.id)

    for video in manifest.videos:
        n = len(video.frames)
        if n == 0:
            raise fail(f"video {video.id} has no frames", video.id)
        if len(video.gps) != n:
            raise fail(f"video {video.id} has {n} frames but {len(video.gps)} GPS fixes", video.id)
        if len(video.small_tiles) != n:
            raise fail(f"video {video.id} has {n} frames but {len(video.small_tiles)} small tiles", video.id)
        if video.large_tile not in large:
            raise fail(f"video {video.id} references unknown large tile {video.large_tile}", video.id)
        zones = set()
        for i, (lat, lon) in enumerate(video.gps):
            try:
                GpsPoint(lat=lat, lon=lon)
            except GeodesyError as e:
                raise fail(f"video {video.id} frame {i}: {e.message}", video.id) from e
            zones.add(utm_zone(lat, lon))
            tile_id = video.small_tiles[i]
            if tile_id not in small:
                raise fail(f"video {video.id} frame {i} references unknown tile {tile_id}", video.id)
            if not small[tile_id].bounds.contains(lat, lon):
                report.warn(f"video {video.id} frame {i} GPS ({lat:.6f}, {lon:.6f}) lies outside tile {tile_id}")
            if tile_id not in large[video.large_tile].children:
                report.warn(f"video {video.id} frame {i} tile {tile_id} is not inside large tile {video.large_tile}")
        if len(zones) > 1:
            raise fail(f"video {video.id} crosses UTM zones {sorted(zones)}", video.id)
        if zones and zones != {manifest.utm_zone}:
            raise fail(f"video {video.id} lies in zone {zones.pop()}, dataset zone is {manifest.utm_zone}", video.id)

    if check_files:
        referenced = [t.path for t in manifest.small_tiles] + [t.path for t in manifest.large_tiles]
        referenced += [f for v in manifest.videos for f in v.frames]
        for rel in referenced:
            if not (root / rel).exists():
                raise DataError(f"missing image {rel}", path=str(path), line=_line_of(text, rel))

    logger.info(
        "ingested %s: %d videos, %d small tiles, %d large tiles, %d warnings",
        path,
        len(manifest.videos),
        len(manifest.small_tiles),
        len(manifest.large_tiles),
        len(report.warnings),
    )
    return manifest, report


def load_image(path: PathLike) -> np.ndarray:
    """Read an 8-bit PNG into float32 [H, W, 3] in [0, 1]."""
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read image: {e}", path=str(path)) from e


def save_image(path: PathLike, array: np.ndarray) -> None:
    """Write float [0, 1] or uint8 [H, W, 3] data as an 8-bit PNG."""
    array = np.asarray(array)
    if array.dtype != np.uint8:
        array = np.clip(np.rint(array * 255.0), 0, 255).astype(np.uint8)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(array).save(path, format="PNG")


class ImageCache:
    """Loads dataset images relative to the manifest directory, memoized."""

    def __init__(self, root: PathLike) -> None:
        self.root = Path(root)
        self._cache: Dict[str, np.ndarray] = {}

    def __call__(self, rel: str) -> np.ndarray:
        if rel not in self._cache:
            self._cache[rel] = load_image(self.root / rel)
        return self._cache[rel]
