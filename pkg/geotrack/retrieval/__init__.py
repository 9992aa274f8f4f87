"""Galleries, exact top-k search and recall.

The hierarchical inference helpers live in `geotrack.retrieval.pipeline`,
which depends on `geotrack.consistent` and is not imported here.
"""

from .gallery import (
    GalleryIndex,
    GeoRecord,
    RetrievalResult,
    batch_topk,
    build_gallery,
    load_gallery,
    save_gallery,
    topk,
)
from .metrics import (
    MODES,
    RECALL_KS,
    RecallReport,
    one_percent_k,
    rank_by_l2,
    recall,
    recall_sweep,
)

__all__ = [
    "GalleryIndex",
    "GeoRecord",
    "MODES",
    "RECALL_KS",
    "RecallReport",
    "RetrievalResult",
    "batch_topk",
    "build_gallery",
    "load_gallery",
    "one_percent_k",
    "rank_by_l2",
    "recall",
    "recall_sweep",
    "save_gallery",
    "topk",
]
