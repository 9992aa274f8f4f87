"""Hierarchical inference: sequence to large aerial, then frame to small aerial.

A street video is first matched against the large-aerial gallery with the
adapted encoders. The children of the top-t large tiles form a per-video
small-aerial gallery in which every frame is matched with the plain
(adapter-free) encoders, giving per-frame candidate sets.
"""

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from geotrack.consistent.candidates import CandidateSequence, candidates_from_results
from geotrack.errors import DataError, EmptyInputError, UsageError
from geotrack.geo.dataset import DatasetManifest, ImageCache, VideoRecord
from geotrack.models.adapter import UnifiedModel, encode_large_aerial, encode_video
from geotrack.models.encoder import ViewEncoder, encode_batch

from .gallery import GalleryIndex, GeoRecord, RetrievalResult, batch_topk, build_gallery, topk
from .metrics import RecallReport, one_percent_k, recall

logger = logging.getLogger(__name__)

TopT = Union[int, str]
PathLike = Union[str, os.PathLike]

RESULTS_VERSION = 1


def video_frames(video: VideoRecord, images: ImageCache, stride: int = 1) -> np.ndarray:
    """Frames of a video as [T, H, W, 3], keeping every `stride`-th one."""
    return np.stack([images(rel) for rel in video.frames[::stride]])


def small_gallery(
    encoder: ViewEncoder, manifest: DatasetManifest, images: ImageCache, chunk: int = 64
) -> GalleryIndex:
    """All small tiles embedded with the plain aerial encoder."""
    tiles = manifest.small_tiles
    if not tiles:
        raise EmptyInputError("dataset has no small tiles")
    embeddings = []
    for start in range(0, len(tiles), chunk):
        batch = np.stack([images(t.path) for t in tiles[start : start + chunk]])
        embeddings.append(encode_batch(encoder, batch))
    geo = [GeoRecord(t.lat, t.lon) for t in tiles]
    return build_gallery(np.concatenate(embeddings), [t.id for t in tiles], geo)


def large_gallery(model: UnifiedModel, manifest: DatasetManifest, images: ImageCache) -> GalleryIndex:
    """All large tiles embedded with the adapted aerial encoder, children kept in the geo table."""
    tiles = manifest.large_tiles
    if not tiles:
        raise EmptyInputError("dataset has no large tiles")
    embeddings = np.stack([encode_large_aerial(model, images(t.path)) for t in tiles])
    geo = [GeoRecord(t.lat, t.lon, tuple(t.children)) for t in tiles]
    return build_gallery(embeddings, [t.id for t in tiles], geo)


def seq_to_image(
    model: UnifiedModel, frames: np.ndarray, large_index: GalleryIndex, t: int, query_id: str = "", stride: int = 1
) -> RetrievalResult:
    """Top-t large tiles for one street video."""
    return topk(large_index, encode_video(model, frames, stride), t, query_id=query_id)


def resolve_top_t(t: TopT, gallery_size: int) -> int:
    """Number of large tiles to keep: an int, ``"1%"`` or ``"all"``."""
    if isinstance(t, str):
        value = t.strip().lower()
        if value == "1%":
            return one_percent_k(gallery_size)
        if value == "all":
            return gallery_size
        try:
            t = int(value)
        except ValueError:
            raise UsageError(f"top-t must be a positive integer, '1%' or 'all', got {t!r}") from None
    if t < 1:
        raise UsageError(f"top-t must be positive, got {t}")
    return int(t)


def make_small_gallery(
    large_results: Union[RetrievalResult, Sequence[RetrievalResult]],
    large_index: GalleryIndex,
    small_index: GalleryIndex,
    t: TopT,
) -> GalleryIndex:
    """Small-tile gallery made of the children of the top-t large tiles.

    Children are deduplicated and kept in ``small_index`` order, so with every
    large tile selected the result equals ``small_index``.

    Raises:
        EmptyInputError: The selected large tiles have no children.
    """
    if isinstance(large_results, RetrievalResult):
        large_results = [large_results]
    keep = resolve_top_t(t, len(large_index))
    children = set()
    for result in large_results:
        for large_id in result.ids[:keep]:
            children.update(large_index.geo_of(large_id).children)
    if not children:
        raise EmptyInputError("the selected large tiles have no child tiles")
    return small_index.subset(children)


def frame_to_frame(
    encoder: ViewEncoder,
    frames: np.ndarray,
    gallery: GalleryIndex,
    t_candidates: int,
    frame_ids: Optional[Sequence[str]] = None,
    truth: Optional[Sequence] = None,
    video_id: str = "",
) -> CandidateSequence:
    """Per-frame top candidates in ``gallery`` with the plain street encoder.

    A gallery smaller than ``t_candidates`` yields padded candidate sets.
    """
    if t_candidates < 1:
        raise UsageError(f"t_candidates must be positive, got {t_candidates}")
    embeddings = encode_batch(encoder, frames)
    ids = list(frame_ids) if frame_ids is not None else [f"{video_id}:{i}" for i in range(len(frames))]
    results = batch_topk(gallery, embeddings, min(t_candidates, len(gallery)), ids)
    return candidates_from_results(results, gallery, t=t_candidates, truth=truth, video_id=video_id)


def frame_rankings(seq: CandidateSequence) -> List[List[tuple]]:
    """Ranked (lat, lon) per frame, padding removed."""
    rankings = []
    for tokens in seq.sets:
        seen, ranked = set(), []
        for c in tokens:
            if c.source_id in seen:
                continue
            seen.add(c.source_id)
            ranked.append((c.lat, c.lon))
        rankings.append(ranked)
    return rankings


@dataclass
class SweepPoint:
    """Frame-level recall with galleries built from the top-t large tiles."""

    t: int
    mean_gallery_size: float
    report: RecallReport

    def to_dict(self) -> Dict[str, object]:
        return {"t": self.t, "mean_gallery_size": self.mean_gallery_size, "recall": self.report.to_dict()}


def gallery_size_sweep(
    encoder: ViewEncoder,
    videos: Sequence[np.ndarray],
    truths: Sequence[Sequence],
    large_results: Sequence[RetrievalResult],
    large_index: GalleryIndex,
    small_index: GalleryIndex,
    ts: Sequence[TopT],
    t_candidates: int = 10,
) -> List[SweepPoint]:
    """Frame-level recall as a function of how many large tiles feed the small gallery."""
    if not (len(videos) == len(truths) == len(large_results)):
        raise UsageError("videos, truths and large results must align")
    points = []
    for t in ts:
        rankings, targets, sizes = [], [], []
        for frames, truth, result in zip(videos, truths, large_results):
            gallery = make_small_gallery(result, large_index, small_index, t)
            seq = frame_to_frame(encoder, frames, gallery, t_candidates, truth=truth, video_id=result.query_id)
            rankings.extend(frame_rankings(seq))
            targets.extend(truth)
            sizes.append(len(gallery))
        report = recall(rankings, targets, mode="distance", gallery_size=int(round(np.mean(sizes))))
        points.append(SweepPoint(resolve_top_t(t, len(large_index)), float(np.mean(sizes)), report))
        logger.info("top-%s large tiles: gallery %.1f, R@1 %.3f", t, np.mean(sizes), report.r1)
    return points


def save_results(path: PathLike, results: Sequence[RetrievalResult]) -> Path:
    """Write sequence-to-image rankings as ``{"version": 1, "results": [...]}``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {"version": RESULTS_VERSION, "results": [r.to_dict() for r in results]}
    path.write_text(json.dumps(payload, indent=1), encoding="utf-8")
    return path


def load_results(path: PathLike) -> List[RetrievalResult]:
    path = Path(path)
    if not path.exists():
        raise DataError("retrieval results not found", path=str(path))
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"invalid JSON: {e.msg}", path=str(path), line=e.lineno) from e
    if payload.get("version") != RESULTS_VERSION:
        raise DataError(f"unsupported results version {payload.get('version')!r}", path=str(path))
    try:
        return [
            RetrievalResult(str(r["query_id"]), tuple(str(i) for i in r["ids"]), tuple(float(s) for s in r["scores"]))
            for r in payload.get("results", [])
        ]
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"malformed retrieval result: {e}", path=str(path)) from e
