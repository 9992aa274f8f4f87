"""Immutable embedding galleries and exact top-k search.

File layout (little-endian)::

    b"TMGX" | u8 version | u32 M | u32 d
    M x (u16 len | id utf-8)
    M x (f64 lat | f64 lon | u32 n_children | n_children x (u16 len | id utf-8))
    M*d float32, row-major
"""

from __future__ import annotations

import io
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from geotrack.errors import CapacityError, DataError, EmptyInputError, ShapeError, UsageError

logger = logging.getLogger(__name__)

MAGIC = b"TMGX"
VERSION = 1
UNIT_NORM_TOL = 1e-4

PathLike = Union[str, os.PathLike]


@dataclass(frozen=True)
class GeoRecord:
    """Location of a gallery item; large items also list their child tile ids."""

    lat: float
    lon: float
    children: Tuple[str, ...] = ()


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked neighbours of one query, scores descending, ties by ascending id."""

    query_id: str
    ids: Tuple[str, ...]
    scores: Tuple[float, ...]

    def __len__(self) -> int:
        return len(self.ids)

    def to_dict(self) -> dict:
        return {"query_id": self.query_id, "ids": list(self.ids), "scores": [float(s) for s in self.scores]}


@dataclass(frozen=True)
class GalleryIndex:
    """Row-major matrix of unit embeddings with ids and geo records."""

    embeddings: np.ndarray
    ids: Tuple[str, ...]
    geo: Tuple[GeoRecord, ...]
    _rows: Dict[str, int] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.embeddings.flags.writeable = False
        self._rows.update({item: i for i, item in enumerate(self.ids)})

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])

    def row(self, item_id: str) -> int:
        try:
            return self._rows[item_id]
        except KeyError:
            raise UsageError(f"id {item_id!r} not in gallery") from None

    def __contains__(self, item_id: str) -> bool:
        return item_id in self._rows

    def vector(self, item_id: str) -> np.ndarray:
        return self.embeddings[self.row(item_id)]

    def geo_of(self, item_id: str) -> GeoRecord:
        return self.geo[self.row(item_id)]

    def subset(self, item_ids: Iterable[str]) -> "GalleryIndex":
        """Rows for `item_ids`, kept in this gallery's order."""
        wanted = set(item_ids)
        rows = [i for i, item in enumerate(self.ids) if item in wanted]
        missing = wanted - {self.ids[i] for i in rows}
        if missing:
            raise UsageError(f"{len(missing)} ids not in gallery, e.g. {sorted(missing)[0]!r}")
        return GalleryIndex(
            embeddings=np.array(self.embeddings[rows]),
            ids=tuple(self.ids[i] for i in rows),
            geo=tuple(self.geo[i] for i in rows),
        )

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        write_gallery(buf, self)
        return buf.getvalue()


def build_gallery(
    embeddings: np.ndarray,
    ids: Sequence[str],
    geo: Optional[Sequence[GeoRecord]] = None,
    dim: Optional[int] = None,
) -> GalleryIndex:
    """Validate and freeze a gallery.

    Raises:
        UsageError: Duplicate ids, rows that are not unit-norm, or mismatched counts.
    """
    embeddings = np.asarray(embeddings, dtype=np.float32)
    if embeddings.size == 0:
        embeddings = embeddings.reshape(0, dim or (embeddings.shape[-1] if embeddings.ndim == 2 else 0))
    if embeddings.ndim != 2:
        raise ShapeError(f"gallery embeddings must be [M, d], got {embeddings.shape}")
    ids = tuple(str(i) for i in ids)
    if len(ids) != embeddings.shape[0]:
        raise UsageError(f"{embeddings.shape[0]} embeddings but {len(ids)} ids")
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for item in ids:
            if item in seen:
                dup = item
                break
            seen.add(item)
        raise UsageError(f"duplicate gallery id {dup!r}")
    geo = tuple(geo) if geo is not None else tuple(GeoRecord(0.0, 0.0) for _ in ids)
    if len(geo) != len(ids):
        raise UsageError(f"{len(ids)} ids but {len(geo)} geo records")
    if len(ids):
        norms = np.linalg.norm(embeddings.astype(np.float64), axis=1)
        bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_NORM_TOL)
        if bad.size:
            raise UsageError(f"gallery row {ids[bad[0]]!r} is not unit-norm (norm {norms[bad[0]]:.6f})")
    return GalleryIndex(embeddings=np.ascontiguousarray(embeddings.copy()), ids=ids, geo=geo)


def topk(index: GalleryIndex, query: np.ndarray, k: int, query_id: str = "") -> RetrievalResult:
    """Exact brute-force top-k by cosine similarity.

    Raises:
        EmptyInputError: The gallery is empty.
        CapacityError: k exceeds the gallery size.
    """
    return batch_topk(index, np.asarray(query)[None, :], k, [query_id])[0]


def batch_topk(
    index: GalleryIndex, queries: np.ndarray, k: int, query_ids: Optional[Sequence[str]] = None
) -> List[RetrievalResult]:
    """`topk` for a [Q, d] block of queries sharing one scan of the gallery."""
    if len(index) == 0:
        raise EmptyInputError("cannot query an empty gallery")
    if k < 1:
        raise UsageError(f"k must be positive, got {k}")
    if k > len(index):
        raise CapacityError(f"k={k} exceeds gallery size {len(index)}")
    queries = np.atleast_2d(np.asarray(queries, dtype=np.float64))
    if queries.shape[1] != index.dim:
        raise ShapeError(f"query dim {queries.shape[1]} does not match gallery dim {index.dim}")
    norms = np.linalg.norm(queries, axis=1, keepdims=True)
    queries = queries / np.where(norms > 0, norms, 1.0)
    scores = queries @ index.embeddings.astype(np.float64).T
    ids_sorted = np.asarray(index.ids, dtype=str)
    query_ids = list(query_ids) if query_ids is not None else [str(i) for i in range(len(queries))]
    out = []
    for q, row in enumerate(scores):
        order = np.lexsort((ids_sorted, -row))[:k]
        out.append(
            RetrievalResult(
                query_id=query_ids[q],
                ids=tuple(index.ids[i] for i in order),
                scores=tuple(float(row[i]) for i in order),
            )
        )
    return out


def _pack_str(stream: BinaryIO, value: str) -> None:
    encoded = value.encode("utf-8")
    stream.write(struct.pack("<H", len(encoded)))
    stream.write(encoded)


def _read(stream: BinaryIO, size: int) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise DataError("gallery file truncated")
    return data


def _unpack_str(stream: BinaryIO) -> str:
    (length,) = struct.unpack("<H", _read(stream, 2))
    return _read(stream, length).decode("utf-8")


def write_gallery(stream: BinaryIO, index: GalleryIndex) -> None:
    stream.write(MAGIC)
    stream.write(struct.pack("<BII", VERSION, len(index), index.dim))
    for item in index.ids:
        _pack_str(stream, item)
    for record in index.geo:
        stream.write(struct.pack("<ddI", record.lat, record.lon, len(record.children)))
        for child in record.children:
            _pack_str(stream, child)
    stream.write(np.ascontiguousarray(index.embeddings, dtype="<f4").tobytes())


def read_gallery(stream: BinaryIO) -> GalleryIndex:
    if _read(stream, 4) != MAGIC:
        raise DataError("not a gallery file (bad magic)")
    version, count, dim = struct.unpack("<BII", _read(stream, 9))
    if version != VERSION:
        raise DataError(f"unsupported gallery version {version}")
    ids = [_unpack_str(stream) for _ in range(count)]
    geo = []
    for _ in range(count):
        lat, lon, n_children = struct.unpack("<ddI", _read(stream, 20))
        geo.append(GeoRecord(lat, lon, tuple(_unpack_str(stream) for _ in range(n_children))))
    matrix = np.frombuffer(_read(stream, 4 * count * dim), dtype="<f4").astype(np.float32)
    return build_gallery(matrix.reshape(count, dim), ids, geo, dim=dim)


def save_gallery(path: PathLike, index: GalleryIndex) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(index.to_bytes())
    logger.info("wrote gallery %s (M=%d, d=%d)", path, len(index), index.dim)
    return path


def load_gallery(path: PathLike) -> GalleryIndex:
    path = Path(path)
    if not path.exists():
        raise DataError("gallery not found", path=str(path))
    with open(path, "rb") as f:
        try:
            return read_gallery(f)
        except DataError as e:
            raise DataError(e.message, path=str(path)) from e
