"""Recall@k evaluation.

Two notions of a correct retrieval are supported: ``id`` (the ranked item is
the ground-truth item, used for sequence-to-image retrieval) and
``distance`` (the ranked item lies within a radius of the ground-truth GPS
point, used for frame-level retrieval).
"""

import logging
import math
from dataclasses import dataclass
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from geotrack.core.base_models import BaseModel, RecordType
from geotrack.errors import EmptyInputError, UsageError
from geotrack.geo.geodesy import MILES_THRESHOLD_M, haversine_arrays

from .gallery import GalleryIndex, RetrievalResult

logger = logging.getLogger(__name__)

RECALL_KS = (1, 5, 10)
MODES = ("id", "distance")

LatLon = Tuple[float, float]
Ranking = Union[RetrievalResult, Sequence[str], Sequence[LatLon]]


@dataclass
class RecallReport(BaseModel):
    """Recall fractions of one evaluation."""

    r1: float = 0.0
    r5: float = 0.0
    r10: float = 0.0
    r1pct: float = 0.0
    gallery_size: int = 0
    queries: int = 0
    k_1pct: int = 1
    mode: str = "id"
    threshold_m: Optional[float] = None
    record_type: RecordType = RecordType.RECALL

    def at(self, k: int) -> float:
        return {1: self.r1, 5: self.r5, 10: self.r10}[k]


def one_percent_k(gallery_size: int) -> int:
    """k used for R@1%: ceil(1% of the gallery), at least 1."""
    return max(1, math.ceil(0.01 * gallery_size))


def _ranked_ids(item: Ranking) -> List[str]:
    if isinstance(item, RetrievalResult):
        return list(item.ids)
    return [str(i) for i in item]


def first_hits_by_id(predictions: Sequence[Ranking], ground_truth: Sequence[Union[str, Iterable[str]]]) -> np.ndarray:
    """0-based rank of the first correct id per query (``inf`` when absent)."""
    hits = np.full(len(predictions), np.inf)
    for q, (ranked, truth) in enumerate(zip(predictions, ground_truth)):
        accepted = {truth} if isinstance(truth, str) else set(truth)
        for rank, item in enumerate(_ranked_ids(ranked)):
            if item in accepted:
                hits[q] = rank
                break
    return hits


def first_hits_by_distance(
    predictions: Sequence[Sequence[LatLon]], ground_truth: Sequence[LatLon], threshold_m: float
) -> np.ndarray:
    """0-based rank of the first prediction within ``threshold_m`` of the truth."""
    hits = np.full(len(predictions), np.inf)
    for q, (ranked, truth) in enumerate(zip(predictions, ground_truth)):
        if len(ranked) == 0:
            continue
        points = np.asarray(ranked, dtype=np.float64).reshape(-1, 2)
        dist = haversine_arrays(points[:, 0], points[:, 1], truth[0], truth[1])
        inside = np.flatnonzero(dist <= threshold_m)
        if inside.size:
            hits[q] = inside[0]
    return hits


def report_from_hits(
    hits: np.ndarray, gallery_size: int, mode: str, threshold_m: Optional[float] = None
) -> RecallReport:
    hits = np.asarray(hits, dtype=np.float64)
    if hits.size == 0:
        raise EmptyInputError("recall needs at least one query")
    k_1pct = one_percent_k(gallery_size)

    def frac(k: int) -> float:
        return float(np.mean(hits < k))

    return RecallReport(
        r1=frac(1),
        r5=frac(5),
        r10=frac(10),
        r1pct=frac(k_1pct),
        gallery_size=int(gallery_size),
        queries=int(hits.size),
        k_1pct=k_1pct,
        mode=mode,
        threshold_m=threshold_m,
    )


def recall(
    predictions: Sequence[Ranking],
    ground_truth: Sequence,
    mode: str = "id",
    gallery_size: Optional[int] = None,
    threshold_m: float = MILES_THRESHOLD_M,
) -> RecallReport:
    """Recall at 1, 5, 10 and 1% of the gallery.

    Args:
        predictions: Per query, a ranked list of ids (``id`` mode) or of
            ``(lat, lon)`` points (``distance`` mode).
        ground_truth: Per query, the correct id (or a set of accepted ids), or
            the true ``(lat, lon)``.
        mode: ``id`` or ``distance``.
        gallery_size: M for R@1%; defaults to the longest ranking.
        threshold_m: Radius of a correct match in ``distance`` mode.

    Raises:
        EmptyInputError: No queries.
        UsageError: Unknown mode or mismatched lengths.
    """
    if mode not in MODES:
        raise UsageError(f"recall mode must be one of {MODES}, got {mode!r}")
    if len(predictions) != len(ground_truth):
        raise UsageError(f"{len(predictions)} predictions for {len(ground_truth)} ground-truth entries")
    if len(predictions) == 0:
        raise EmptyInputError("recall needs at least one query")
    if gallery_size is None:
        gallery_size = max(len(_ranked_ids(p)) if mode == "id" else len(p) for p in predictions)
    if mode == "id":
        return report_from_hits(first_hits_by_id(predictions, ground_truth), gallery_size, mode)
    hits = first_hits_by_distance(predictions, ground_truth, threshold_m)
    return report_from_hits(hits, gallery_size, mode, threshold_m=threshold_m)


def recall_sweep(
    predictions: Sequence[Sequence[LatLon]],
    ground_truth: Sequence[LatLon],
    thresholds_m: Sequence[float],
    gallery_size: Optional[int] = None,
) -> List[RecallReport]:
    """Distance-mode recall for each threshold, in the order given."""
    return [recall(predictions, ground_truth, "distance", gallery_size, threshold_m=t) for t in thresholds_m]


def rank_by_l2(index: GalleryIndex, query: np.ndarray) -> List[str]:
    """Gallery ids by ascending L2 distance to the normalised query, ties by id."""
    query = np.asarray(query, dtype=np.float64)
    query = query / (np.linalg.norm(query) or 1.0)
    dist = np.linalg.norm(index.embeddings.astype(np.float64) - query[None, :], axis=1)
    order = np.lexsort((np.asarray(index.ids, dtype=str), dist))
    return [index.ids[i] for i in order]
