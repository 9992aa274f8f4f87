"""Soft-margin triplet objectives for the cross-view encoders."""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from geotrack.core.tensor import Tensor, as_tensor
from geotrack.errors import ShapeError, UsageError

DEFAULT_ALPHA = 10.0
DIST_EPS = 1e-12

Distance = Union[float, np.ndarray, Tensor]


def soft_margin_triplet(d_pos: Distance, d_neg: Distance, alpha: float = DEFAULT_ALPHA) -> Distance:
    """``log(1 + exp(alpha * (d_pos - d_neg)))``.

    Tensors stay on the tape; plain numbers and arrays are evaluated with
    ``np.logaddexp`` so large margins do not overflow.
    """
    if isinstance(d_pos, Tensor) or isinstance(d_neg, Tensor):
        like = d_pos if isinstance(d_pos, Tensor) else d_neg
        return ((as_tensor(d_pos, like) - as_tensor(d_neg, like)) * alpha).softplus()
    value = np.logaddexp(0.0, alpha * (np.asarray(d_pos, dtype=np.float64) - np.asarray(d_neg, dtype=np.float64)))
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class TripletBatchPlan:
    """Index batch whose in-batch non-matching items serve as negatives.

    ``groups`` names the aerial item of every pair. Pairs of one batch must
    show different aerial items, otherwise a negative would equal a positive.
    """

    indices: np.ndarray
    groups: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if len(self.indices) < 2:
            raise UsageError(f"a triplet batch needs at least 2 pairs, got {len(self.indices)}")
        if len(set(np.asarray(self.indices).tolist())) != len(self.indices):
            raise UsageError("a triplet batch cannot repeat a pair")
        if self.groups is not None:
            if len(self.groups) != len(self.indices):
                raise UsageError("one group per pair is required")
            if len(set(self.groups)) != len(self.groups):
                raise UsageError("pairs of one triplet batch must show different aerial items")

    @property
    def size(self) -> int:
        return len(self.indices)

    def negative_mask(self) -> np.ndarray:
        """``[B, B]`` with True where column k is a negative for anchor row i."""
        return ~np.eye(self.size, dtype=bool)


def plan_epoch(groups: Sequence[str], batch: int, rng: np.random.Generator) -> List[TripletBatchPlan]:
    """Shuffle pairs into batches with at most one pair per aerial item.

    Leftovers that cannot form a batch of two are skipped for this epoch.
    """
    if batch < 2:
        raise UsageError(f"triplet batches need a batch size of at least 2, got {batch}")
    pending = [int(i) for i in rng.permutation(len(groups))]
    plans = []
    while pending:
        current: List[int] = []
        seen = set()
        rest = []
        for idx in pending:
            if len(current) < batch and groups[idx] not in seen:
                current.append(idx)
                seen.add(groups[idx])
            else:
                rest.append(idx)
        pending = rest
        if len(current) < 2:
            break
        plans.append(TripletBatchPlan(np.asarray(current), tuple(groups[i] for i in current)))
    return plans


def pairwise_distances(a: Tensor, b: Tensor) -> Tensor:
    """L2 distances ``[B, B]`` between rows of ``a`` and rows of ``b``."""
    if a.ndim != 2 or a.shape != b.shape:
        raise ShapeError(f"expected two [B, d] embedding batches, got {a.shape} and {b.shape}")
    batch, dim = a.shape
    diff = a.reshape(batch, 1, dim) - b.reshape(1, batch, dim)
    return ((diff * diff).sum(axis=-1) + DIST_EPS).sqrt()


def batch_triplet_loss(
    street: Tensor, aerial: Tensor, alpha: float = DEFAULT_ALPHA, symmetric: bool = True
) -> Tensor:
    """Mean soft-margin triplet loss of matched rows against every in-batch negative.

    Row i of ``street`` matches row i of ``aerial``. With ``symmetric`` the
    street-anchored and aerial-anchored terms are averaged.

    Raises:
        UsageError: Fewer than 2 pairs.
    """
    plan = TripletBatchPlan(np.arange(street.shape[0]))
    dist = pairwise_distances(street, aerial)
    idx = np.arange(plan.size)
    positive = dist[idx, idx]
    weight = Tensor(plan.negative_mask().astype(dist.dtype), dtype=dist.dtype)
    pairs = plan.size * (plan.size - 1)
    street_anchor = soft_margin_triplet(positive.reshape(plan.size, 1), dist, alpha)
    loss = (street_anchor * weight).sum() * (1.0 / pairs)
    if not symmetric:
        return loss
    aerial_anchor = soft_margin_triplet(positive.reshape(1, plan.size), dist, alpha)
    return (loss + (aerial_anchor * weight).sum() * (1.0 / pairs)) * 0.5
