"""Transformer building blocks shared by the encoders and the retriever."""

from __future__ import annotations

from typing import Optional

import numpy as np

from geotrack.core import ops
from geotrack.core.module import Module, init_ones, init_xavier, init_zeros
from geotrack.core.tensor import Tensor


class Linear(Module):
    """Affine map with weight stored as [in, out]."""

    def __init__(self, rng: np.random.Generator, fan_in: int, fan_out: int, zero: bool = False) -> None:
        super().__init__()
        self.weight = init_zeros((fan_in, fan_out)) if zero else init_xavier(rng, fan_in, fan_out)
        self.bias = init_zeros((fan_out,))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.linear(x, self.weight, self.bias)


class MLP(Module):
    """Two-layer perceptron with a GeLU in between."""

    def __init__(
        self, rng: np.random.Generator, dim: int, hidden: int, out: Optional[int] = None, zero_out: bool = False
    ) -> None:
        super().__init__()
        self.fc1 = Linear(rng, dim, hidden)
        self.fc2 = Linear(rng, hidden, out or dim, zero=zero_out)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(ops.gelu(self.fc1(x)))


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5) -> None:
        super().__init__()
        self.gamma = init_ones((dim,))
        self.beta = init_zeros((dim,))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


class BatchNorm(Module):
    """Per-feature normalisation over every non-feature axis, with running statistics."""

    def __init__(self, dim: int, momentum: float = 0.1, eps: float = 1e-5) -> None:
        super().__init__()
        self.gamma = init_ones((dim,))
        self.beta = init_zeros((dim,))
        self.momentum = momentum
        self.eps = eps
        self.register_buffer("running_mean", np.zeros(dim))
        self.register_buffer("running_var", np.ones(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return ops.batch_norm(
            x,
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            training=self.training,
            momentum=self.momentum,
            eps=self.eps,
        )


class Attention(Module):
    """Multi-head attention projections."""

    def __init__(self, rng: np.random.Generator, dim: int, heads: int) -> None:
        super().__init__()
        self.heads = heads
        self.q = Linear(rng, dim, dim)
        self.k = Linear(rng, dim, dim)
        self.v = Linear(rng, dim, dim)
        self.o = Linear(rng, dim, dim)

    def params(self) -> ops.AttentionParams:
        return ops.AttentionParams(
            wq=self.q.weight,
            bq=self.q.bias,
            wk=self.k.weight,
            bk=self.k.bias,
            wv=self.v.weight,
            bv=self.v.bias,
            wo=self.o.weight,
            bo=self.o.bias,
        )

    def __call__(self, q: Tensor, kv: Optional[Tensor] = None, mask: Optional[np.ndarray] = None) -> Tensor:
        kv = q if kv is None else kv
        return ops.multi_head_attention(q, kv, kv, self.params(), self.heads, mask)


class TransformerBlock(Module):
    """Pre-norm encoder block: x + SA(LN(x)), then x + MLP(LN(x))."""

    def __init__(self, rng: np.random.Generator, dim: int, heads: int, mlp_ratio: float) -> None:
        super().__init__()
        self.ln1 = LayerNorm(dim)
        self.attn = Attention(rng, dim, heads)
        self.ln2 = LayerNorm(dim)
        self.mlp = MLP(rng, dim, int(dim * mlp_ratio))

    def spatial(self, h: Tensor) -> Tensor:
        """Residual self-attention over the token axis (second to last)."""
        return h + self.attn(self.ln1(h))

    def feed_forward(self, h: Tensor) -> Tensor:
        return h + self.mlp(self.ln2(h))

    def __call__(self, h: Tensor) -> Tensor:
        return self.feed_forward(self.spatial(h))
