"""Per-view image transformers.

Each view (street, aerial) has its own `ViewEncoder`: the image is cut into
non-overlapping p x p patches, projected linearly, prefixed with a learnable
CLS token, given learnable positional embeddings and passed through the
transformer blocks. The final CLS state goes through a projection head and
is L2-normalised.
"""

from __future__ import annotations

import logging
from typing import Dict, Sequence, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError, model_validator

from geotrack.core import ops
from geotrack.core.module import Module, init_normal, init_zeros
from geotrack.core.tensor import Tensor, concat, no_grad
from geotrack.errors import EmptyInputError, ShapeError, UsageError

from .layers import LayerNorm, Linear, TransformerBlock

logger = logging.getLogger(__name__)

CHANNELS = 3

ImageLike = Union[np.ndarray, Tensor]


class EncoderConfig(BaseModel):
    """Shape of one view encoder. Desk-scale defaults."""

    image_size: int = Field(64, ge=1)
    patch_size: int = Field(16, ge=1)
    depth: int = Field(4, ge=1)
    model_dim: int = Field(64, ge=1)
    heads: int = Field(4, ge=1)
    mlp_ratio: float = Field(4.0, gt=0)
    embed_dim: int = Field(64, ge=1)

    @model_validator(mode="after")
    def _check_divisibility(self):
        if self.image_size % self.patch_size:
            raise ValueError(f"image_size {self.image_size} not divisible by patch_size {self.patch_size}")
        if self.model_dim % self.heads:
            raise ValueError(f"model_dim {self.model_dim} not divisible by heads {self.heads}")
        return self

    @property
    def num_patches(self) -> int:
        return (self.image_size // self.patch_size) ** 2

    @property
    def patch_dim(self) -> int:
        return self.patch_size * self.patch_size * CHANNELS

    def to_header(self) -> Dict[str, str]:
        return {f"encoder.{k}": str(v) for k, v in self.model_dump().items()}

    @classmethod
    def from_header(cls, header: Dict[str, str]) -> "EncoderConfig":
        values = {k.split(".", 1)[1]: v for k, v in header.items() if k.startswith("encoder.")}
        return make_config(cls, values)


def make_config(model, values):
    """Validate a pydantic config, turning validation failures into `UsageError`."""
    try:
        return model.model_validate(values)
    except ValidationError as e:
        first = e.errors()[0]
        loc = ".".join(str(p) for p in first["loc"]) or model.__name__
        raise UsageError(f"invalid {model.__name__} ({loc}): {first['msg']}") from e


def patchify(image: ImageLike, p: int) -> np.ndarray:
    """[..., H, W, C] -> [..., P, p*p*C], patches row-major, pixels row-major inside a patch."""
    data = image.data if isinstance(image, Tensor) else np.asarray(image)
    *lead, h, w, c = data.shape
    if h % p or w % p:
        raise ShapeError(f"image {h}x{w} not divisible by patch size {p}")
    x = data.reshape(*lead, h // p, p, w // p, p, c)
    x = np.moveaxis(x, -4, -3)
    return np.ascontiguousarray(x.reshape(*lead, (h // p) * (w // p), p * p * c))


def unpatchify(patches: np.ndarray, h: int, w: int, p: int) -> np.ndarray:
    """Inverse of `patchify`."""
    patches = np.asarray(patches)
    *lead, count, dim = patches.shape
    c = dim // (p * p)
    if count != (h // p) * (w // p) or dim != p * p * c:
        raise ShapeError(f"{count} patches of {dim} values do not tile a {h}x{w} image with p={p}")
    x = patches.reshape(*lead, h // p, w // p, p, p, c)
    x = np.moveaxis(x, -3, -4)
    return np.ascontiguousarray(x.reshape(*lead, h, w, c))


class ViewEncoder(Module):
    """Transformer encoder for one view."""

    def __init__(self, config: EncoderConfig, seed: int = 0, view: str = "") -> None:
        super().__init__()
        rng = np.random.default_rng(seed)
        self.config = config
        self.view = view
        dim = config.model_dim
        self.patch = Linear(rng, config.patch_dim, dim)
        self.cls = init_normal(rng, (dim,))
        self.pos = init_normal(rng, (config.num_patches + 1, dim))
        self.blocks = [TransformerBlock(rng, dim, config.heads, config.mlp_ratio) for _ in range(config.depth)]
        self.norm = LayerNorm(dim)
        self.head = Linear(rng, dim, config.embed_dim)
        self.head.bias = init_zeros((config.embed_dim,))

    def _check_images(self, images: np.ndarray) -> None:
        size = self.config.image_size
        if images.ndim < 3 or images.shape[-3:] != (size, size, CHANNELS):
            raise ShapeError(f"expected images [..., {size}, {size}, {CHANNELS}], got {images.shape}")

    def tokens(self, images: ImageLike) -> Tensor:
        """Embed images [B, H, W, 3] into initial tokens [B, P+1, D]."""
        data = images.data if isinstance(images, Tensor) else np.asarray(images, dtype=np.float32)
        self._check_images(data)
        lead = data.shape[:-3]
        x = self.patch(Tensor(patchify(data, self.config.patch_size), dtype=self.patch.weight.dtype))
        dim = self.config.model_dim
        ones = Tensor(np.ones(lead + (1, 1)), dtype=x.dtype)
        cls = ones * self.cls.reshape(1, dim)
        return concat([cls, x], axis=-2) + self.pos

    def project(self, cls_state: Tensor) -> Tensor:
        """Unnormalised head output for CLS states [..., D]."""
        return self.head(self.norm(cls_state))

    def __call__(self, images: ImageLike) -> Tensor:
        """L2-normalised embeddings [B, d] for images [B, H, W, 3]."""
        h = self.tokens(images)
        for block in self.blocks:
            h = block(h)
        return ops.l2_normalize(self.project(h[..., 0, :]))

    def header(self) -> Dict[str, str]:
        return {"kind": "encoder", "view": self.view, **self.config.to_header()}


def encode_image(enc: ViewEncoder, image: ImageLike) -> np.ndarray:
    """Unit-norm d-vector for a single [H, W, 3] image."""
    data = image.data if isinstance(image, Tensor) else np.asarray(image, dtype=np.float32)
    if data.ndim != 3:
        raise ShapeError(f"encode_image expects [H, W, 3], got {data.shape}")
    return encode_batch(enc, data[None])[0]


def encode_batch(enc: ViewEncoder, images: Union[np.ndarray, Sequence[np.ndarray]], chunk: int = 64) -> np.ndarray:
    """Embeddings [B, d] for a batch; every row equals `encode_image` of that image.

    No operation mixes samples, so rows do not depend on batch composition.
    """
    images = np.asarray(images, dtype=np.float32)
    if images.ndim != 4 or len(images) == 0:
        if images.size == 0:
            raise EmptyInputError("encode_batch needs at least one image")
        raise ShapeError(f"encode_batch expects [B, H, W, 3], got {images.shape}")
    out = []
    with no_grad():
        for start in range(0, len(images), chunk):
            out.append(enc(images[start : start + chunk]).data)
    return np.concatenate(out, axis=0)
