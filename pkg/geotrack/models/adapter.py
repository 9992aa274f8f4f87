"""GeoAdapter: temporal adaptation of a frozen image encoder.

Every encoder block gets one adapter. For frame tokens ``h`` of shape
``[T, P+1, D]`` an adapted block computes::

    h_hat = h + SA(LN(h))                      # spatial, per frame
    h     = h_hat + F2(TSA(LN(F1(h_hat + TE))))
    h     = h + MLP(LN(h))

TSA reuses the block's frozen spatial attention projections. Only F1, F2, the
adapter's own LayerNorm and the temporal embeddings TE are trainable. F2's
output layer and TE start at zero, so a fresh adapter is an exact identity.
"""

from __future__ import annotations

import logging
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator

from geotrack.core import ops
from geotrack.core.module import Module, init_zeros
from geotrack.core.tensor import Tensor, concat, no_grad
from geotrack.errors import CapacityError, EmptyInputError, ShapeError, UsageError

from .encoder import ImageLike, ViewEncoder, make_config
from .layers import MLP, Attention, LayerNorm, TransformerBlock

logger = logging.getLogger(__name__)

CLS = "cls"
ALL = "all"
ASYM = "asym"
VARIANTS = (CLS, ALL, ASYM)


class AdapterConfig(BaseModel):
    """GeoAdapter hyperparameters."""

    variant: str = CLS
    t_max: int = Field(64, ge=1)
    ratio: float = Field(0.25, gt=0, le=1)

    @field_validator("variant")
    @classmethod
    def _known_variant(cls, value: str) -> str:
        value = value.lower()
        if value not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {value!r}")
        return value

    def for_view(self, view: str) -> str:
        """Resolve the TSA variant used for `view` (asym: aerial attends CLS, street attends all)."""
        if self.variant != ASYM:
            return self.variant
        return CLS if view == "aerial" else ALL

    def to_header(self) -> Dict[str, str]:
        return {f"adapter.{k}": str(v) for k, v in self.model_dump().items()}

    @classmethod
    def from_header(cls, header: Dict[str, str]) -> "AdapterConfig":
        values = {k.split(".", 1)[1]: v for k, v in header.items() if k.startswith("adapter.")}
        return make_config(cls, values)


def temporal_self_attention(
    tokens: Tensor, variant: str, sa_weights: ops.AttentionParams, heads: int
) -> Tensor:
    """Attention across the frame axis of ``tokens`` [..., T, P+1, D].

    ``cls``: the T CLS tokens attend to each other and are scattered back;
    every other token is returned unchanged. ``all``: each spatial index
    attends across T independently.
    """
    if tokens.ndim < 3:
        raise ShapeError(f"temporal attention expects [..., T, P+1, D], got {tokens.shape}")
    if variant == CLS:
        *lead, frames, _, dim = tokens.shape
        attended = ops.multi_head_attention(
            tokens[..., 0, :], tokens[..., 0, :], tokens[..., 0, :], sa_weights, heads
        )
        return concat([attended.reshape(*lead, frames, 1, dim), tokens[..., 1:, :]], axis=-2)
    if variant == ALL:
        across = tokens.swapaxes(-2, -3)
        return ops.multi_head_attention(across, across, across, sa_weights, heads).swapaxes(-2, -3)
    raise UsageError(f"unknown temporal attention variant {variant!r}")


class GeoAdapter(Module):
    """The adapter inserted into one encoder block."""

    def __init__(self, rng: np.random.Generator, dim: int, hidden: int, t_max: int) -> None:
        super().__init__()
        self.t_max = t_max
        self.te = init_zeros((t_max, dim))
        self.f1 = MLP(rng, dim, hidden)
        self.ln = LayerNorm(dim)
        self.f2 = MLP(rng, dim, hidden, zero_out=True)

    def __call__(self, h_hat: Tensor, attn: Attention, variant: str) -> Tensor:
        frames, dim = h_hat.shape[-3], h_hat.shape[-1]
        if frames > self.t_max:
            raise CapacityError(f"{frames} frames exceed the adapter's temporal capacity {self.t_max}")
        x = h_hat + self.te[:frames].reshape(frames, 1, dim)
        x = self.ln(self.f1(x))
        x = temporal_self_attention(x, variant, attn.params(), attn.heads)
        return self.f2(x)


def adapted_block_forward(h_prev: Tensor, block: TransformerBlock, adapter: GeoAdapter, variant: str) -> Tensor:
    """Spatial attention, then the adapter, then the block MLP, each residual."""
    if h_prev.ndim < 3:
        raise ShapeError(f"adapted block expects [..., T, P+1, D], got {h_prev.shape}")
    h_hat = block.spatial(h_prev)
    h = h_hat + adapter(h_hat, block.attn, variant)
    return block.feed_forward(h)


class AdapterState(Module):
    """All adapters of one view encoder; checkpointed separately from the encoder."""

    def __init__(self, encoder: ViewEncoder, config: Optional[AdapterConfig] = None, seed: int = 0) -> None:
        super().__init__()
        self.config = config or AdapterConfig()
        self.view = encoder.view
        rng = np.random.default_rng(seed)
        dim = encoder.config.model_dim
        hidden = max(1, int(round(dim * self.config.ratio)))
        self.adapters = [GeoAdapter(rng, dim, hidden, self.config.t_max) for _ in encoder.blocks]

    @property
    def variant(self) -> str:
        return self.config.for_view(self.view)

    def header(self) -> Dict[str, str]:
        return {"kind": "adapter", "view": self.view, **self.config.to_header()}


def pool_frames(per_frame: Tensor) -> Tensor:
    """Mean of unit frame embeddings [..., T, d] along T, renormalised."""
    return ops.l2_normalize(per_frame.mean(axis=-2))


class UnifiedModel(Module):
    """A frozen view encoder with its GeoAdapters, mapping frame stacks to one embedding."""

    def __init__(self, encoder: ViewEncoder, state: Optional[AdapterState] = None) -> None:
        super().__init__()
        self.encoder = encoder
        self.state = state if state is not None else AdapterState(encoder)
        if len(self.state.adapters) != len(encoder.blocks):
            raise ShapeError(f"{len(self.state.adapters)} adapters for {len(encoder.blocks)} encoder blocks")
        if self.state.view and encoder.view and self.state.view != encoder.view:
            raise UsageError(f"{self.state.view} adapters cannot drive the {encoder.view} encoder")

    @property
    def view(self) -> str:
        return self.encoder.view

    def frame_embeddings(self, frames: ImageLike) -> Tensor:
        """Per-frame unit head outputs [T, d] for frames [T, H, W, 3]."""
        h = self.encoder.tokens(frames)
        variant = self.state.variant
        for block, adapter in zip(self.encoder.blocks, self.state.adapters):
            h = adapted_block_forward(h, block, adapter, variant)
        return ops.l2_normalize(self.encoder.project(h[..., 0, :]))

    def __call__(self, frames: ImageLike) -> Tensor:
        return pool_frames(self.frame_embeddings(frames))


def _as_frames(frames, stride: int = 1) -> np.ndarray:
    if stride < 1:
        raise UsageError(f"frame stride must be positive, got {stride}")
    data = frames.data if isinstance(frames, Tensor) else np.asarray(frames, dtype=np.float32)
    if data.size == 0 or len(data) == 0:
        raise EmptyInputError("video has no frames")
    if data.ndim != 4:
        raise ShapeError(f"expected frames [T, H, W, 3], got {data.shape}")
    return data[::stride]


def encode_video(model: UnifiedModel, frames, stride: int = 1) -> np.ndarray:
    """Unit d-vector of a video, keeping every `stride`-th frame."""
    data = _as_frames(frames, stride)
    with no_grad():
        return model(data).data


def tile_image(image: np.ndarray, tile: int) -> np.ndarray:
    """Cut [H, W, 3] into row-major tiles [k_rows * k_cols, tile, tile, 3]."""
    image = np.asarray(image)
    if image.ndim != 3:
        raise ShapeError(f"expected an [H, W, 3] image, got {image.shape}")
    h, w, c = image.shape
    if h % tile or w % tile:
        raise ShapeError(f"large image {h}x{w} is not a whole number of {tile}px tiles")
    rows, cols = h // tile, w // tile
    tiles = image.reshape(rows, tile, cols, tile, c).swapaxes(1, 2)
    return np.ascontiguousarray(tiles.reshape(rows * cols, tile, tile, c))


def encode_large_aerial(model: UnifiedModel, large_image: np.ndarray) -> np.ndarray:
    """Embed a large aerial image by treating its tiles as the frames of a video."""
    tiles = tile_image(large_image, model.encoder.config.image_size)
    return encode_video(model, tiles)


def baseline1_video_embedding(encoder: ViewEncoder, items) -> np.ndarray:
    """Mean of the plain encoder's per-item embeddings, renormalised."""
    data = _as_frames(items)
    with no_grad():
        return pool_frames(encoder(data)).data
