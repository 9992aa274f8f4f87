"""Procedural aerial scenes with street-view videos driven along their roads.

The world is a single raster in a local UTM frame: pixel (x, y) maps to
easting ``E0 + x * mpp`` and northing ``N0 - y * mpp`` where (E0, N0) is the
projection of the scene origin (top-left corner). Small tiles partition the
raster on a ``tile_px`` grid; each large tile is a k x k block of small tiles.
Street frames are rotated, perspective-warped crops of the aerial raster
centred on the frame position, so each frame is visually tied to the tile
under it.
"""

from __future__ import annotations

import logging
import math
import os
from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
from PIL import Image, ImageDraw, ImageFilter
from pydantic import BaseModel, Field, model_validator

from geotrack.errors import GeodesyError
from geotrack.utils.data_utils import make_rng

from .dataset import (
    MANIFEST_NAME,
    Bounds,
    DatasetManifest,
    LargeTile,
    SmallTile,
    VideoRecord,
    save_image,
)
from .geodesy import latlon_to_utm_arrays, utm_to_latlon_arrays, utm_zone

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]
Polyline = List[Tuple[float, float]]


class SceneSpec(BaseModel):
    """Everything that determines a synthetic dataset, besides the seed."""

    origin_lat: float = 40.0
    origin_lon: float = -75.2
    meters_per_pixel: float = Field(0.5, gt=0)
    tile_px: int = Field(64, ge=8)
    k: int = Field(3, ge=1)
    large_rows: int = Field(3, ge=1)
    large_cols: int = Field(3, ge=1)
    videos: int = Field(18, ge=1)
    frames: int = Field(8, ge=1)
    frame_step_m: float = Field(8.0, gt=0)
    street_px: int = Field(64, ge=8)
    street_fov_m: float = Field(24.0, gt=0)
    max_rotation_deg: float = Field(10.0, ge=0)
    perspective: float = Field(0.15, ge=0, lt=0.5)
    brightness_jitter: float = Field(0.1, ge=0, lt=1)
    flip_prob: float = Field(0.0, ge=0, le=1)
    extra_roads: int = Field(6, ge=0)
    road_width_m: float = Field(4.0, gt=0)
    buildings_per_tile: float = Field(1.5, ge=0)
    val_fraction: float = Field(0.2, ge=0, lt=1)
    roads: List[Polyline] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_geometry(self):
        if abs(self.origin_lat) > 80:
            raise ValueError("origin latitude must stay well inside UTM coverage")
        return self

    @property
    def world_px(self) -> Tuple[int, int]:
        """(width, height) of the full raster."""
        side = self.tile_px * self.k
        return self.large_cols * side, self.large_rows * side

    @property
    def tile_m(self) -> float:
        return self.tile_px * self.meters_per_pixel


class SceneFrame:
    """Pixel <-> UTM <-> GPS mapping of a generated scene."""

    def __init__(self, spec: SceneSpec) -> None:
        self.spec = spec
        self.zone = utm_zone(spec.origin_lat, spec.origin_lon)
        self.hemisphere = "N" if spec.origin_lat >= 0 else "S"
        e0, n0 = latlon_to_utm_arrays(
            np.array([spec.origin_lat]), np.array([spec.origin_lon]), self.zone, self.hemisphere
        )
        self.e0, self.n0 = float(e0[0]), float(n0[0])

    def to_utm(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        mpp = self.spec.meters_per_pixel
        return self.e0 + np.asarray(x, dtype=np.float64) * mpp, self.n0 - np.asarray(y, dtype=np.float64) * mpp

    def to_gps(self, x, y) -> Tuple[np.ndarray, np.ndarray]:
        e, n = self.to_utm(x, y)
        return utm_to_latlon_arrays(e, n, self.zone, self.hemisphere)

    def bounds(self, x0: float, y0: float, x1: float, y1: float) -> Bounds:
        xs = np.array([x0, (x0 + x1) / 2, x1] * 3)
        ys = np.repeat([y0, (y0 + y1) / 2, y1], 3)
        lat, lon = self.to_gps(xs, ys)
        return Bounds(
            min_lat=float(lat.min()), min_lon=float(lon.min()), max_lat=float(lat.max()), max_lon=float(lon.max())
        )


def _value_noise(rng: np.random.Generator, width: int, height: int, cell: int) -> np.ndarray:
    gw, gh = width // cell + 2, height // cell + 2
    grid = rng.random((gh, gw)).astype(np.float32)
    img = Image.fromarray(grid).resize((gw * cell, gh * cell), Image.Resampling.BILINEAR)
    return np.asarray(img, dtype=np.float32)[:height, :width]


def render_texture(rng: np.random.Generator, width: int, height: int) -> np.ndarray:
    """Multi-octave value noise tinted per channel, float [H, W, 3]."""
    channels = []
    for _ in range(3):
        noise = np.zeros((height, width), dtype=np.float32)
        weight = 0.0
        for octave, cell in enumerate((48, 16, 6, 2)):
            amp = 0.55**octave
            noise += amp * _value_noise(rng, width, height, cell)
            weight += amp
        channels.append(noise / weight)
    base = np.stack(channels, axis=-1)
    tint = np.array([0.35, 0.45, 0.25], dtype=np.float32)
    variation = rng.uniform(0.6, 1.4, size=3).astype(np.float32)
    return np.clip(base * variation * 0.8 + tint * 0.4, 0.0, 1.0)


def _random_road(rng: np.random.Generator, width: int, height: int) -> Polyline:
    points = [(float(rng.uniform(0, width)), float(rng.uniform(0, height)))]
    heading = rng.uniform(0, 2 * np.pi)
    step = max(width, height) / 8
    for _ in range(8):
        heading += rng.normal(0, 0.4)
        x = float(np.clip(points[-1][0] + step * np.cos(heading), 0, width))
        y = float(np.clip(points[-1][1] + step * np.sin(heading), 0, height))
        points.append((x, y))
    return points


def walk_trajectory(
    rng: np.random.Generator, box: Tuple[float, float, float, float], frames: int, step_px: float
) -> Tuple[np.ndarray, np.ndarray]:
    """Smooth random walk inside `box` (x0, y0, x1, y1); returns positions [n, 2] and headings [n]."""
    x0, y0, x1, y1 = box
    margin = min(step_px, (x1 - x0) / 4, (y1 - y0) / 4)
    lo = np.array([x0 + margin, y0 + margin])
    hi = np.array([x1 - margin, y1 - margin])
    pos = rng.uniform(lo, hi)
    heading = rng.uniform(0, 2 * np.pi)
    positions, headings = [pos.copy()], [heading]
    for _ in range(frames - 1):
        heading += rng.normal(0, 0.35)
        nxt = pos + step_px * np.array([np.cos(heading), np.sin(heading)])
        if np.any(nxt < lo) or np.any(nxt > hi):
            heading += np.pi + rng.normal(0, 0.3)
            nxt = pos + step_px * np.array([np.cos(heading), np.sin(heading)])
        pos = np.clip(nxt, lo, hi)
        positions.append(pos.copy())
        headings.append(heading)
    return np.array(positions), np.array(headings)


def render_street_frame(
    world: Image.Image,
    center: Tuple[float, float],
    spec: SceneSpec,
    rng: np.random.Generator,
    pad: int,
) -> np.ndarray:
    """Rotated, perspective-warped crop of the (padded) aerial raster at `center`."""
    crop = spec.street_fov_m / spec.meters_per_pixel
    half = crop * 0.75
    cx, cy = center[0] + pad, center[1] + pad
    box = tuple(int(round(v)) for v in (cx - half, cy - half, cx + half, cy + half))
    region = world.crop(box)
    angle = float(rng.uniform(-spec.max_rotation_deg, spec.max_rotation_deg))
    region = region.rotate(angle, resample=Image.Resampling.BILINEAR)
    size = region.size[0]
    inner = (size - crop) / 2
    shrink = spec.perspective * crop
    # quad corners: upper-left, lower-left, lower-right, upper-right
    quad = (
        inner + shrink, inner,
        inner, inner + crop,
        inner + crop, inner + crop,
        inner + crop - shrink, inner,
    )
    frame = region.transform(
        (spec.street_px, spec.street_px), Image.Transform.QUAD, quad, resample=Image.Resampling.BILINEAR
    )
    frame = frame.filter(ImageFilter.GaussianBlur(radius=0.6))
    out = np.asarray(frame, dtype=np.float32) / 255.0
    out = np.clip(out * (1.0 + rng.uniform(-spec.brightness_jitter, spec.brightness_jitter)), 0.0, 1.0)
    if rng.random() < spec.flip_prob:
        out = out[:, ::-1]
    return np.ascontiguousarray(out)


def generate_scene(spec: SceneSpec, out_dir: PathLike, seed: int = 0) -> DatasetManifest:
    """Render a dataset into `out_dir` and write its manifest.

    Same scene settings and seed give bit-identical images and manifest.
    """
    out_dir = Path(out_dir)
    frame = SceneFrame(spec)
    width, height = spec.world_px
    corners_lat, corners_lon = frame.to_gps(np.array([0, width, 0, width]), np.array([0, 0, height, height]))
    if len({utm_zone(float(a), float(b)) for a, b in zip(corners_lat, corners_lon)}) > 1:
        raise GeodesyError("scene crosses a UTM zone boundary; move the origin")

    texture = render_texture(make_rng(seed, 1), width, height)
    world = Image.fromarray(np.clip(np.rint(texture * 255), 0, 255).astype(np.uint8))
    draw = ImageDraw.Draw(world)
    rng_build = make_rng(seed, 2)
    n_buildings = int(round(spec.buildings_per_tile * (width // spec.tile_px) * (height // spec.tile_px)))
    for _ in range(n_buildings):
        w, h = rng_build.uniform(4, spec.tile_px / 2, size=2)
        x, y = rng_build.uniform(0, width - w), rng_build.uniform(0, height - h)
        shade = tuple(int(v) for v in rng_build.integers(90, 230, size=3))
        draw.rectangle((x, y, x + w, y + h), fill=shade)

    # trajectories first, so their roads can be drawn underneath every video
    rng_traj = make_rng(seed, 3)
    side = spec.tile_px * spec.k
    n_large = spec.large_rows * spec.large_cols
    order = rng_traj.permutation(max(spec.videos, n_large))[: spec.videos] % n_large
    step_px = spec.frame_step_m / spec.meters_per_pixel
    trajectories = []
    for large_index in order:
        row, col = divmod(int(large_index), spec.large_cols)
        box = (col * side, row * side, (col + 1) * side, (row + 1) * side)
        positions, headings = walk_trajectory(rng_traj, box, spec.frames, step_px)
        trajectories.append((int(large_index), positions, headings))

    roads = [list(map(tuple, r)) for r in spec.roads]
    rng_roads = make_rng(seed, 4)
    roads += [_random_road(rng_roads, width, height) for _ in range(spec.extra_roads)]
    roads += [[(float(x), float(y)) for x, y in positions] for _, positions, _ in trajectories]
    road_px = max(1, int(round(spec.road_width_m / spec.meters_per_pixel)))
    for road in roads:
        if len(road) >= 2:
            draw.line(road, fill=(92, 92, 96), width=road_px, joint="curve")
        for x, y in road:
            r = road_px / 2
            draw.ellipse((x - r, y - r, x + r, y + r), fill=(92, 92, 96))

    world_arr = np.asarray(world)
    small_tiles: List[SmallTile] = []
    large_tiles: List[LargeTile] = []
    rows, cols = height // spec.tile_px, width // spec.tile_px
    for r in range(rows):
        for c in range(cols):
            tile_id = f"s{r:03d}_{c:03d}"
            rel = f"aerial/small/{tile_id}.png"
            x0, y0 = c * spec.tile_px, r * spec.tile_px
            save_image(out_dir / rel, world_arr[y0 : y0 + spec.tile_px, x0 : x0 + spec.tile_px])
            lat, lon = frame.to_gps(x0 + spec.tile_px / 2, y0 + spec.tile_px / 2)
            small_tiles.append(
                SmallTile(
                    id=tile_id,
                    path=rel,
                    lat=float(lat),
                    lon=float(lon),
                    bounds=frame.bounds(x0, y0, x0 + spec.tile_px, y0 + spec.tile_px),
                    parent=f"L{r // spec.k:02d}_{c // spec.k:02d}",
                )
            )
    for R in range(spec.large_rows):
        for C in range(spec.large_cols):
            large_id = f"L{R:02d}_{C:02d}"
            rel = f"aerial/large/{large_id}.png"
            x0, y0 = C * side, R * side
            save_image(out_dir / rel, world_arr[y0 : y0 + side, x0 : x0 + side])
            lat, lon = frame.to_gps(x0 + side / 2, y0 + side / 2)
            children = [
                f"s{R * spec.k + i:03d}_{C * spec.k + j:03d}" for i in range(spec.k) for j in range(spec.k)
            ]
            large_tiles.append(
                LargeTile(
                    id=large_id,
                    path=rel,
                    lat=float(lat),
                    lon=float(lon),
                    bounds=frame.bounds(x0, y0, x0 + side, y0 + side),
                    children=children,
                )
            )

    pad = int(math.ceil(spec.street_fov_m / spec.meters_per_pixel))
    padded = Image.fromarray(np.pad(world_arr, ((pad, pad), (pad, pad), (0, 0)), mode="reflect"))
    rng_street = make_rng(seed, 5)
    n_val = int(round(spec.videos * spec.val_fraction))
    videos: List[VideoRecord] = []
    for v, (large_index, positions, _) in enumerate(trajectories):
        video_id = f"v{v:04d}"
        lat, lon = frame.to_gps(positions[:, 0], positions[:, 1])
        frames, tiles = [], []
        for i, (x, y) in enumerate(positions):
            rel = f"videos/{video_id}/f{i:03d}.png"
            save_image(out_dir / rel, render_street_frame(padded, (x, y), spec, rng_street, pad))
            frames.append(rel)
            tr = min(int(y // spec.tile_px), rows - 1)
            tc = min(int(x // spec.tile_px), cols - 1)
            tiles.append(f"s{tr:03d}_{tc:03d}")
        R, C = divmod(large_index, spec.large_cols)
        videos.append(
            VideoRecord(
                id=video_id,
                frames=frames,
                gps=[(float(a), float(b)) for a, b in zip(lat, lon)],
                small_tiles=tiles,
                large_tile=f"L{R:02d}_{C:02d}",
                split="val" if v >= spec.videos - n_val else "train",
            )
        )

    manifest = DatasetManifest(
        utm_zone=frame.zone,
        hemisphere=frame.hemisphere,
        tile_px=spec.tile_px,
        k=spec.k,
        meters_per_pixel=spec.meters_per_pixel,
        seed=seed,
        scene=spec.model_dump(exclude={"roads"}),
        small_tiles=small_tiles,
        large_tiles=large_tiles,
        videos=videos,
    )
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / MANIFEST_NAME).write_text(manifest.model_dump_json(indent=1), encoding="utf-8")
    logger.info(
        "generated scene in %s: %d videos x %d frames, %d small / %d large tiles",
        out_dir,
        len(videos),
        spec.frames,
        len(small_tiles),
        len(large_tiles),
    )
    return manifest
