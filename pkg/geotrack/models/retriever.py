"""TransRetriever: an encoder-decoder that picks one candidate per frame.

Input is a candidate tensor ``[n, t, 3]`` of normalised ``(x, y, sim)``
tokens. Every token of set ``i`` is projected, shifted by the sinusoidal
set embedding ``PE_i`` and encoded together with a learnable START token.
Decoder step ``i`` reads the encoding of the previous choice (START for the
first step) plus ``PE_i``, runs causal self-attention over the steps so far,
cross-attends only to the encodings of set ``i`` and scores the ``t``
candidates of that set with a clipped pointer head.

The encoder is set-causal by default: a token sees START and the sets up
to its own, so the choice for frame ``i`` never depends on later frames.
``context="full"`` opts into a bidirectional encoder.

Layers are post-norm and use batch normalisation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

from geotrack.core import ops
from geotrack.core.module import Module, init_normal
from geotrack.core.tensor import Tensor, concat, no_grad
from geotrack.errors import CapacityError, ShapeError, UsageError

from .encoder import make_config
from .layers import Attention, BatchNorm, Linear

logger = logging.getLogger(__name__)

TOKEN_DIM = 3
CONTEXT_MODES = ("causal", "full")


class RetrieverConfig(BaseModel):
    """TransRetriever shape."""

    dim: int = Field(128, ge=1)
    ff_dim: int = Field(512, ge=1)
    heads: int = Field(8, ge=1)
    encoder_layers: int = Field(6, ge=1)
    decoder_layers: int = Field(2, ge=1)
    max_sets: int = Field(64, ge=1)
    clip: float = Field(10.0, gt=0)
    context: str = "causal"

    @field_validator("context")
    @classmethod
    def _known_context(cls, value: str) -> str:
        if value not in CONTEXT_MODES:
            raise ValueError(f"context must be one of {CONTEXT_MODES}, got {value!r}")
        return value

    @model_validator(mode="after")
    def _check_heads(self):
        if self.dim % self.heads:
            raise ValueError(f"dim {self.dim} not divisible by heads {self.heads}")
        return self

    def to_header(self) -> Dict[str, str]:
        return {f"retriever.{k}": str(v) for k, v in self.model_dump().items()}

    @classmethod
    def from_header(cls, header: Dict[str, str]) -> "RetrieverConfig":
        values = {k.split(".", 1)[1]: v for k, v in header.items() if k.startswith("retriever.")}
        return make_config(cls, values)


def sinusoidal_table(length: int, dim: int) -> np.ndarray:
    """Fixed sin/cos embeddings; row ``i`` is the embedding of position ``i``."""
    position = np.arange(length, dtype=np.float64)[:, None]
    rate = np.exp(-math.log(10000.0) * (np.arange(0, dim, 2, dtype=np.float64) / dim))
    table = np.zeros((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(position * rate)
    table[:, 1::2] = np.cos(position * rate)[:, : dim // 2]
    return table.astype(np.float32)


class FeedForward(Module):
    def __init__(self, rng: np.random.Generator, dim: int, hidden: int) -> None:
        super().__init__()
        self.fc1 = Linear(rng, dim, hidden)
        self.fc2 = Linear(rng, hidden, dim)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ops.relu(self.fc1(x)))


class EncoderLayer(Module):
    def __init__(self, rng: np.random.Generator, config: RetrieverConfig) -> None:
        super().__init__()
        self.attn = Attention(rng, config.dim, config.heads)
        self.norm1 = BatchNorm(config.dim)
        self.ff = FeedForward(rng, config.dim, config.ff_dim)
        self.norm2 = BatchNorm(config.dim)

    def __call__(self, x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
        x = self.norm1(x + self.attn(x, mask=mask))
        return self.norm2(x + self.ff(x))


class DecoderLayer(Module):
    def __init__(self, rng: np.random.Generator, config: RetrieverConfig) -> None:
        super().__init__()
        self.self_attn = Attention(rng, config.dim, config.heads)
        self.norm1 = BatchNorm(config.dim)
        self.cross_attn = Attention(rng, config.dim, config.heads)
        self.norm2 = BatchNorm(config.dim)
        self.ff = FeedForward(rng, config.dim, config.ff_dim)
        self.norm3 = BatchNorm(config.dim)

    def __call__(self, x: Tensor, memory: Tensor, self_mask: np.ndarray, cross_mask: np.ndarray) -> Tensor:
        x = self.norm1(x + self.self_attn(x, mask=self_mask))
        x = self.norm2(x + self.cross_attn(x, memory, mask=cross_mask))
        return self.norm3(x + self.ff(x))


@dataclass
class EncodedSets:
    """Encoder output for a batch of candidate sequences.

    ``memory`` is ``[B, 1 + n*t, dim]`` with START at position 0 followed by
    the tokens of set 1, set 2 and so on.
    """

    memory: Tensor
    sets: int
    size: int

    def set_tokens(self, i: int) -> Tensor:
        """Encodings of set ``i`` (0-based), ``[B, t, dim]``."""
        lo = 1 + i * self.size
        return self.memory[:, lo : lo + self.size, :]


class TransRetriever(Module):
    """Autoregressive candidate selector."""

    def __init__(self, config: Optional[RetrieverConfig] = None, seed: int = 0) -> None:
        super().__init__()
        self.config = config or RetrieverConfig()
        rng = np.random.default_rng(seed)
        dim = self.config.dim
        self.embed = Linear(rng, TOKEN_DIM, dim)
        self.start = init_normal(rng, (dim,), std=1.0)
        self.encoder = [EncoderLayer(rng, self.config) for _ in range(self.config.encoder_layers)]
        self.decoder = [DecoderLayer(rng, self.config) for _ in range(self.config.decoder_layers)]
        self.query = Linear(rng, dim, dim)
        self.key = Linear(rng, dim, dim)
        # row i embeds set i (1-based); row 0 is unused so START carries no set offset
        self._pe = sinusoidal_table(self.config.max_sets + 1, dim)

    def header(self) -> Dict[str, str]:
        return {"kind": "retriever", **self.config.to_header()}

    def _pe_rows(self, first: int, count: int, dtype) -> Tensor:
        return Tensor(self._pe[first : first + count], dtype=dtype)

    def _check_tokens(self, tokens: np.ndarray) -> np.ndarray:
        tokens = np.asarray(tokens, dtype=self.embed.weight.dtype)
        if tokens.ndim == 3:
            tokens = tokens[None]
        if tokens.ndim != 4 or tokens.shape[-1] != TOKEN_DIM:
            raise ShapeError(f"candidate tokens must be [B, n, t, {TOKEN_DIM}], got {tokens.shape}")
        if tokens.shape[1] < 1 or tokens.shape[2] < 1:
            raise ShapeError(f"candidate tokens need n >= 1 and t >= 1, got {tokens.shape}")
        if tokens.shape[1] > self.config.max_sets:
            raise CapacityError(f"{tokens.shape[1]} frames exceed the positional capacity {self.config.max_sets}")
        return tokens

    def encoder_mask(self, n: int, t: int) -> Optional[np.ndarray]:
        """Additive encoder mask; ``causal`` lets a token see START and sets up to its own."""
        if self.config.context == "full":
            return None
        owner = np.concatenate([[-1], np.repeat(np.arange(n), t)])
        return ops.additive_mask(owner[None, :] <= owner[:, None])

    def encode(self, tokens: np.ndarray) -> EncodedSets:
        """Encode candidate tokens ``[B, n, t, 3]`` (or a single ``[n, t, 3]``)."""
        tokens = self._check_tokens(tokens)
        batch, n, t, _ = tokens.shape
        x = self.embed(Tensor(tokens, dtype=tokens.dtype))
        x = x + self._pe_rows(1, n, x.dtype).reshape(n, 1, self.config.dim)
        x = x.reshape(batch, n * t, self.config.dim)
        start = Tensor(np.ones((batch, 1, 1)), dtype=x.dtype) * self.start.reshape(1, self.config.dim)
        h = concat([start, x], axis=1)
        mask = self.encoder_mask(n, t)
        for layer in self.encoder:
            h = layer(h, mask=mask)
        return EncodedSets(memory=h, sets=n, size=t)

    def cross_mask(self, steps: int, n: int, t: int, allowed: Optional[np.ndarray] = None) -> np.ndarray:
        """Step ``i`` may attend only to the tokens of set ``i``; ``allowed`` [steps, t] narrows it further."""
        grid = np.zeros((steps, 1 + n * t), dtype=bool)
        for i in range(steps):
            lo = 1 + i * t
            grid[i, lo : lo + t] = True if allowed is None else np.asarray(allowed[i], dtype=bool)
        return ops.additive_mask(grid)

    def decoder_inputs(self, encoded: EncodedSets, choices: np.ndarray) -> Tensor:
        """Previous-choice encodings plus ``PE_i`` for every step; ``choices`` [B, steps-1]."""
        choices = np.asarray(choices, dtype=np.int64)
        batch = encoded.memory.shape[0]
        steps = choices.shape[1] + 1
        positions = np.zeros((batch, steps), dtype=np.int64)
        if steps > 1:
            positions[:, 1:] = 1 + np.arange(steps - 1)[None, :] * encoded.size + choices
        rows = np.repeat(np.arange(batch)[:, None], steps, axis=1)
        prev = encoded.memory[rows, positions]
        return prev + self._pe_rows(1, steps, prev.dtype)

    def decode(self, encoded: EncodedSets, choices: np.ndarray, allowed: Optional[np.ndarray] = None) -> Tensor:
        """Pointer logits ``[B, steps, t]`` for steps ``0..len(choices)``.

        ``choices`` holds the (teacher-forced or decoded) picks of the previous
        steps. Masked candidates get a logit of ``MASK_VALUE``.
        """
        choices = np.asarray(choices, dtype=np.int64)
        if choices.ndim == 1:
            choices = choices[None]
        steps = choices.shape[1] + 1
        n, t = encoded.sets, encoded.size
        if steps > n:
            raise UsageError(f"cannot decode step {steps} of a {n}-frame sequence")
        if choices.size and (choices.min() < 0 or choices.max() >= t):
            raise UsageError(f"choices must index candidates 0..{t - 1}")
        x = self.decoder_inputs(encoded, choices)
        self_mask = ops.causal_mask(steps)
        cross = self.cross_mask(steps, n, t, allowed)
        for layer in self.decoder:
            x = layer(x, encoded.memory, self_mask, cross)
        batch, dim = x.shape[0], self.config.dim
        keys = self.key(encoded.memory[:, 1 : 1 + steps * t, :]).reshape(batch, steps, t, dim)
        q = self.query(x).reshape(batch, steps, dim, 1)
        scores = (keys @ q).reshape(batch, steps, t) * (1.0 / math.sqrt(dim))
        logits = scores.tanh() * self.config.clip
        if allowed is not None:
            block = np.where(np.asarray(allowed, dtype=bool), 0.0, ops.MASK_VALUE)
            logits = logits + Tensor(block, dtype=logits.dtype)
        return logits

    def __call__(self, tokens: np.ndarray, labels: np.ndarray) -> Tensor:
        """Teacher-forced logits ``[B, n, t]`` given ground-truth choices ``[B, n]``."""
        encoded = self.encode(tokens)
        labels = np.asarray(labels, dtype=np.int64).reshape(encoded.memory.shape[0], encoded.sets)
        return self.decode(encoded, labels[:, :-1])

    def loss(self, tokens: np.ndarray, labels: np.ndarray) -> Tensor:
        logits = self(tokens, labels)
        return ops.cross_entropy(logits.reshape(-1, logits.shape[-1]), np.asarray(labels).reshape(-1))


def encode_sets(model: TransRetriever, tokens: np.ndarray) -> EncodedSets:
    """Encode one candidate sequence ``[n, t, 3]`` for decoding."""
    with no_grad():
        return model.encode(tokens)


def decode_step(
    model: TransRetriever,
    encoded: EncodedSets,
    i: int,
    choices: Sequence[int],
    allowed: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Distribution over the ``t`` candidates of set ``i`` (0-based).

    ``choices`` are the picks of steps ``0..i-1``; the decoder input of step
    ``i`` is the encoding of ``choices[i-1]`` (START for ``i == 0``).
    ``allowed`` optionally restricts set ``i`` to a boolean ``[t]`` mask.
    """
    if not 0 <= i < encoded.sets:
        raise UsageError(f"step {i} out of range for {encoded.sets} sets")
    if len(choices) != i:
        raise UsageError(f"step {i} needs {i} previous choices, got {len(choices)}")
    mask = None
    if allowed is not None:
        mask = np.ones((i + 1, encoded.size), dtype=bool)
        mask[i] = np.asarray(allowed, dtype=bool)
    with no_grad():
        logits = model.decode(encoded, np.asarray(choices, dtype=np.int64).reshape(1, i), mask)
        return ops.softmax(logits[0, i], axis=-1).data.astype(np.float64)


def greedy_decode(model: TransRetriever, tokens: np.ndarray) -> List[int]:
    """Pick the most probable candidate at each step, feeding it to the next.

    Ties go to the lowest candidate index.
    """
    was_training = model.training
    model.eval()
    try:
        encoded = encode_sets(model, tokens)
        choices: List[int] = []
        for i in range(encoded.sets):
            p = decode_step(model, encoded, i, choices)
            choices.append(int(np.argmax(p)))
        return choices
    finally:
        model.train(was_training)
