"""Per-frame candidate sets and trajectory predictions.

A `CandidateSequence` holds, for each of ``n`` frames, exactly ``t``
candidate small tiles with their UTM position and cosine similarity. All
candidates of a sequence share one UTM zone. The JSON interchange format is::

    {"version": 1, "sequences": [
        {"video_id": "...", "zone": 18, "hemisphere": "N",
         "frames": [{"frame_id": "...", "truth": [lat, lon] | null, "label": j | null,
                     "candidates": [{"id", "lat", "lon", "utm_x", "utm_y", "sim"}, ...]},
                    ...]},
        ...]}
"""

from __future__ import annotations

import json
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from geotrack.core.base_models import BaseModel
from geotrack.errors import DataError, EmptyInputError, GeodesyError, UsageError
from geotrack.geo.geodesy import latlon_to_utm_arrays, utm_to_latlon_arrays, utm_zone
from geotrack.retrieval.gallery import GalleryIndex, RetrievalResult

logger = logging.getLogger(__name__)

INTERCHANGE_VERSION = 1
TOKEN_SCALE_M = 100.0
PAD_SIM = -1.0
SIM_TOL = 1e-5

PathLike = Union[str, os.PathLike]
LatLon = Tuple[float, float]


@dataclass(frozen=True)
class CandidateToken:
    """One candidate tile for one frame."""

    utm_x: float
    utm_y: float
    sim: float
    source_id: str = ""
    lat: float = math.nan
    lon: float = math.nan

    def __post_init__(self):
        if not (math.isfinite(self.utm_x) and math.isfinite(self.utm_y)):
            raise UsageError(f"candidate {self.source_id!r} has non-finite UTM coordinates")
        if not -1.0 - SIM_TOL <= self.sim <= 1.0 + SIM_TOL:
            raise UsageError(f"candidate {self.source_id!r} similarity {self.sim} outside [-1, 1]")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.source_id,
            "lat": None if math.isnan(self.lat) else self.lat,
            "lon": None if math.isnan(self.lon) else self.lon,
            "utm_x": self.utm_x,
            "utm_y": self.utm_y,
            "sim": self.sim,
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CandidateToken":
        lat, lon = data.get("lat"), data.get("lon")
        return cls(
            utm_x=float(data["utm_x"]),
            utm_y=float(data["utm_y"]),
            sim=float(data["sim"]),
            source_id=str(data.get("id", "")),
            lat=math.nan if lat is None else float(lat),
            lon=math.nan if lon is None else float(lon),
        )


@dataclass
class CandidateSequence:
    """Ordered candidate sets N_1..N_n, all of size t."""

    sets: List[List[CandidateToken]]
    zone: int = 0
    hemisphere: str = "N"
    video_id: str = ""
    frame_ids: List[str] = field(default_factory=list)
    truth: Optional[List[LatLon]] = None
    labels: Optional[List[int]] = None

    def __post_init__(self):
        if not self.sets:
            raise EmptyInputError("a candidate sequence needs at least one frame")
        sizes = {len(s) for s in self.sets}
        if len(sizes) != 1 or 0 in sizes:
            raise UsageError(f"every candidate set must have the same non-zero size, got {sorted(sizes)}")
        if not self.frame_ids:
            self.frame_ids = [str(i) for i in range(len(self.sets))]
        if len(self.frame_ids) != len(self.sets):
            raise UsageError(f"{len(self.frame_ids)} frame ids for {len(self.sets)} candidate sets")
        if self.truth is not None and len(self.truth) != len(self.sets):
            raise UsageError(f"{len(self.truth)} ground-truth points for {len(self.sets)} frames")
        if self.labels is not None:
            if len(self.labels) != len(self.sets):
                raise UsageError(f"{len(self.labels)} labels for {len(self.sets)} frames")
            if any(not 0 <= j < self.t for j in self.labels):
                raise UsageError(f"labels must index candidates 0..{self.t - 1}")

    @property
    def n(self) -> int:
        return len(self.sets)

    @property
    def t(self) -> int:
        return len(self.sets[0])

    def coords(self) -> np.ndarray:
        """UTM positions [n, t, 2] in meters."""
        return np.array([[(c.utm_x, c.utm_y) for c in s] for s in self.sets], dtype=np.float64)

    def sims(self) -> np.ndarray:
        """Similarities [n, t]."""
        return np.array([[c.sim for c in s] for s in self.sets], dtype=np.float64)

    def tokens(self) -> np.ndarray:
        """Model input [n, t, 3]: centred UTM divided by 100 m, similarity unscaled."""
        xy = self.coords()
        centred = (xy - xy.reshape(-1, 2).mean(axis=0)) / TOKEN_SCALE_M
        return np.concatenate([centred, self.sims()[..., None]], axis=-1).astype(np.float32)

    def truth_utm(self) -> Optional[np.ndarray]:
        if self.truth is None:
            return None
        lat, lon = np.asarray(self.truth, dtype=np.float64).T
        e, n = latlon_to_utm_arrays(lat, lon, self.zone, self.hemisphere)
        return np.stack([e, n], axis=-1)

    def with_labels(self, labels: Sequence[int]) -> "CandidateSequence":
        return CandidateSequence(
            sets=self.sets,
            zone=self.zone,
            hemisphere=self.hemisphere,
            video_id=self.video_id,
            frame_ids=list(self.frame_ids),
            truth=self.truth,
            labels=[int(j) for j in labels],
        )

    def to_dict(self) -> Dict[str, Any]:
        frames = []
        for i, tokens in enumerate(self.sets):
            frames.append(
                {
                    "frame_id": self.frame_ids[i],
                    "truth": list(self.truth[i]) if self.truth is not None else None,
                    "label": self.labels[i] if self.labels is not None else None,
                    "candidates": [c.to_dict() for c in tokens],
                }
            )
        return {"video_id": self.video_id, "zone": self.zone, "hemisphere": self.hemisphere, "frames": frames}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CandidateSequence":
        frames = data.get("frames") or []
        truth = [f.get("truth") for f in frames]
        labels = [f.get("label") for f in frames]
        return cls(
            sets=[[CandidateToken.from_dict(c) for c in f.get("candidates", [])] for f in frames],
            zone=int(data.get("zone", 0)),
            hemisphere=str(data.get("hemisphere", "N")),
            video_id=str(data.get("video_id", "")),
            frame_ids=[str(f.get("frame_id", i)) for i, f in enumerate(frames)],
            truth=[tuple(p) for p in truth] if frames and all(p is not None for p in truth) else None,
            labels=[int(j) for j in labels] if frames and all(j is not None for j in labels) else None,
        )


@dataclass
class RawCandidate:
    """A retrieved tile before projection: id, GPS position and similarity."""

    id: str
    lat: float
    lon: float
    sim: float


def tokenize_candidates(
    frames: Sequence[Sequence[RawCandidate]],
    t: Optional[int] = None,
    frame_ids: Optional[Sequence[str]] = None,
    truth: Optional[Sequence[LatLon]] = None,
    video_id: str = "",
) -> CandidateSequence:
    """Project per-frame retrieval results into a `CandidateSequence`.

    Sets longer than ``t`` keep their first ``t`` entries; shorter sets are
    padded by repeating their last (weakest) candidate with similarity -1.

    Raises:
        EmptyInputError: No frames, or a frame without candidates.
        GeodesyError: Candidates fall in more than one UTM zone.
    """
    if not frames:
        raise EmptyInputError("no frames to tokenize")
    if any(len(f) == 0 for f in frames):
        raise EmptyInputError("every frame needs at least one candidate")
    size = t or max(len(f) for f in frames)
    lats = np.array([c.lat for f in frames for c in f], dtype=np.float64)
    lons = np.array([c.lon for f in frames for c in f], dtype=np.float64)
    zones = {utm_zone(la, lo) for la, lo in zip(lats, lons)}
    hemispheres = {"N" if la >= 0 else "S" for la in lats}
    if len(zones) > 1 or len(hemispheres) > 1:
        raise GeodesyError(f"candidates span several UTM zones {sorted(zones)}")
    zone, hemisphere = zones.pop(), hemispheres.pop()
    eastings, northings = latlon_to_utm_arrays(lats, lons, zone, hemisphere)

    sets: List[List[CandidateToken]] = []
    cursor = 0
    for f in frames:
        tokens = []
        for c in f:
            tokens.append(
                CandidateToken(
                    utm_x=float(eastings[cursor]),
                    utm_y=float(northings[cursor]),
                    sim=float(np.clip(c.sim, -1.0, 1.0)),
                    source_id=c.id,
                    lat=float(c.lat),
                    lon=float(c.lon),
                )
            )
            cursor += 1
        tokens = tokens[:size]
        while len(tokens) < size:
            last = tokens[-1]
            tokens.append(CandidateToken(last.utm_x, last.utm_y, PAD_SIM, last.source_id, last.lat, last.lon))
        sets.append(tokens)
    return CandidateSequence(
        sets=sets,
        zone=zone,
        hemisphere=hemisphere,
        video_id=video_id,
        frame_ids=list(frame_ids) if frame_ids is not None else [],
        truth=[tuple(p) for p in truth] if truth is not None else None,
    )


def candidates_from_results(
    results: Sequence[RetrievalResult],
    gallery: GalleryIndex,
    t: Optional[int] = None,
    truth: Optional[Sequence[LatLon]] = None,
    video_id: str = "",
) -> CandidateSequence:
    """Build a sequence from per-frame gallery rankings."""
    frames = []
    for r in results:
        geo = [gallery.geo_of(item) for item in r.ids]
        frames.append([RawCandidate(item, g.lat, g.lon, s) for item, g, s in zip(r.ids, geo, r.scores)])
    return tokenize_candidates(frames, t=t, frame_ids=[r.query_id for r in results], truth=truth, video_id=video_id)


def nearest_labels(seq: CandidateSequence) -> List[int]:
    """Per frame, the candidate closest to the ground-truth position (lowest index on ties)."""
    target = seq.truth_utm()
    if target is None:
        raise UsageError(f"sequence {seq.video_id!r} has no ground truth to label from")
    dist = np.linalg.norm(seq.coords() - target[:, None, :], axis=-1)
    return [int(j) for j in np.argmin(dist, axis=1)]


def dp_objective(seq: CandidateSequence, choices: Sequence[int], lam: float) -> float:
    """Path length of the chosen candidates minus ``lam`` times their total similarity."""
    choices = np.asarray(choices, dtype=np.int64)
    if choices.shape != (seq.n,):
        raise UsageError(f"expected {seq.n} choices, got {choices.shape}")
    frames = np.arange(seq.n)
    points = seq.coords()[frames, choices]
    path = float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum()) if seq.n > 1 else 0.0
    return path - lam * float(seq.sims()[frames, choices].sum())


@dataclass
class TrajectoryPrediction(BaseModel):
    """One chosen candidate per frame, with positions and the path objective."""

    method: str = ""
    video_id: str = ""
    choices: List[int] = field(default_factory=list)
    ids: List[str] = field(default_factory=list)
    utm: List[List[float]] = field(default_factory=list)
    gps: List[List[float]] = field(default_factory=list)
    sims: List[float] = field(default_factory=list)
    zone: int = 0
    hemisphere: str = "N"
    objective: float = 0.0
    lam: float = 0.0
    truth: Optional[List[List[float]]] = None

    def __len__(self) -> int:
        return len(self.choices)


def make_prediction(seq: CandidateSequence, choices: Sequence[int], method: str, lam: float) -> TrajectoryPrediction:
    """Package ``choices`` into a `TrajectoryPrediction` scored with `dp_objective`."""
    choices = [int(j) for j in choices]
    picked = [seq.sets[i][j] for i, j in enumerate(choices)]
    xy = np.array([(c.utm_x, c.utm_y) for c in picked], dtype=np.float64)
    if seq.zone:
        lat, lon = utm_to_latlon_arrays(xy[:, 0], xy[:, 1], seq.zone, seq.hemisphere)
    else:
        lat = np.array([c.lat for c in picked])
        lon = np.array([c.lon for c in picked])
    return TrajectoryPrediction(
        method=method,
        video_id=seq.video_id,
        choices=choices,
        ids=[c.source_id for c in picked],
        utm=xy.tolist(),
        gps=np.stack([lat, lon], axis=-1).tolist(),
        sims=[c.sim for c in picked],
        zone=seq.zone,
        hemisphere=seq.hemisphere,
        objective=dp_objective(seq, choices, lam),
        lam=lam,
        truth=[list(p) for p in seq.truth] if seq.truth is not None else None,
    )


def save_candidates(path: PathLike, sequences: Sequence[CandidateSequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"version": INTERCHANGE_VERSION, "sequences": [s.to_dict() for s in sequences]}
    path.write_text(json.dumps(payload, indent=1), encoding="utf-8")
    logger.info("wrote %d candidate sequences to %s", len(sequences), path)
    return path


def load_candidates(path: PathLike) -> List[CandidateSequence]:
    path = Path(path)
    if not path.exists():
        raise DataError("candidate file not found", path=str(path))
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"invalid JSON: {e.msg}", path=str(path), line=e.lineno) from e
    if payload.get("version") != INTERCHANGE_VERSION:
        raise DataError(f"unsupported candidate file version {payload.get('version')!r}", path=str(path))
    try:
        return [CandidateSequence.from_dict(s) for s in payload.get("sequences", [])]
    except (KeyError, TypeError, ValueError, UsageError) as e:
        raise DataError(f"malformed candidate sequence: {e}", path=str(path)) from e


def save_predictions(path: PathLike, predictions: Sequence[TrajectoryPrediction]) -> Path:
    """Write trajectories as ``{"version": 1, "predictions": [...]}``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"version": INTERCHANGE_VERSION, "predictions": [p.to_dict() for p in predictions]}
    path.write_text(json.dumps(payload, indent=1), encoding="utf-8")
    logger.info("wrote %d trajectories to %s", len(predictions), path)
    return path


def load_predictions(path: PathLike) -> List[TrajectoryPrediction]:
    path = Path(path)
    if not path.exists():
        raise DataError("prediction file not found", path=str(path))
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"invalid JSON: {e.msg}", path=str(path), line=e.lineno) from e
    if payload.get("version") != INTERCHANGE_VERSION or "predictions" not in payload:
        raise DataError("not a trajectory prediction file", path=str(path))
    predictions = [TrajectoryPrediction.from_dict(p) for p in payload["predictions"]]
    for pred in predictions:
        if len(pred.gps) != len(pred.choices):
            raise DataError(f"trajectory {pred.video_id!r} has {len(pred.gps)} points for {len(pred.choices)} frames", path=str(path))
    return predictions
