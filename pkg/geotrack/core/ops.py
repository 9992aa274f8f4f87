"""Neural-network primitives built on `Tensor`.

Fused ops (softmax, layer_norm, gelu, batch_norm) carry their own backward
closures; the rest are compositions of tensor methods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from geotrack.errors import ShapeError

from .tensor import Tensor, as_tensor, matmul, record_flops

MASK_VALUE = -1e9
"""Additive logit for masked attention positions."""

_GELU_C = math.sqrt(2.0 / math.pi)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Numerically stable softmax along `axis`."""
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = (e / e.sum(axis=axis, keepdims=True, dtype=np.float64)).astype(x.dtype)
    record_flops("softmax", 5 * x.size)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True, dtype=np.float64).astype(x.dtype)
        x.accumulate_grad(out_data * (g - dot))

    return Tensor._make(out_data, (x,), "softmax", backward)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=axis, keepdims=True, dtype=np.float64))
    out_data = (shifted - lse).astype(x.dtype)
    record_flops("log_softmax", 5 * x.size)

    def backward(g):
        total = g.sum(axis=axis, keepdims=True, dtype=np.float64).astype(x.dtype)
        x.accumulate_grad(g - np.exp(out_data) * total)

    return Tensor._make(out_data, (x,), "log_softmax", backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis to zero mean and unit variance, then apply the affine."""
    if eps <= 0:
        raise ShapeError("layer_norm eps must be positive")
    x64 = x.data.astype(np.float64)
    mu = x64.mean(axis=-1, keepdims=True)
    var = x64.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((x64 - mu) * inv).astype(x.dtype)
    out_data = xhat * gamma.data + beta.data
    record_flops("layer_norm", 8 * x.size)

    def backward(g):
        if gamma.requires_grad:
            gamma.accumulate_grad((g * xhat).reshape(-1, x.shape[-1]).sum(axis=0))
        if beta.requires_grad:
            beta.accumulate_grad(g.reshape(-1, x.shape[-1]).sum(axis=0))
        if x.requires_grad:
            gh = (g * gamma.data).astype(np.float64)
            xh = xhat.astype(np.float64)
            dx = inv * (gh - gh.mean(axis=-1, keepdims=True) - xh * (gh * xh).mean(axis=-1, keepdims=True))
            x.accumulate_grad(dx.astype(x.dtype))

    return Tensor._make(out_data, (x, gamma, beta), "layer_norm", backward)


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Normalise each feature (last axis) over every other axis.

    In training mode the batch statistics are used and the running buffers are
    updated in place; otherwise the running statistics are applied.
    """
    features = x.shape[-1]
    flat = x.data.reshape(-1, features).astype(np.float64)
    if training and flat.shape[0] > 1:
        mu = flat.mean(axis=0)
        var = flat.var(axis=0)
        count = flat.shape[0]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu
        running_var *= 1.0 - momentum
        running_var += momentum * var * count / (count - 1)
        batch_stats = True
    else:
        mu = running_mean.astype(np.float64)
        var = running_var.astype(np.float64)
        batch_stats = False
    inv = 1.0 / np.sqrt(var + eps)
    xhat = ((flat - mu) * inv).astype(x.dtype).reshape(x.shape)
    out_data = xhat * gamma.data + beta.data
    record_flops("batch_norm", 8 * x.size)

    def backward(g):
        g2 = g.reshape(-1, features)
        xh = xhat.reshape(-1, features)
        if gamma.requires_grad:
            gamma.accumulate_grad((g2 * xh).sum(axis=0))
        if beta.requires_grad:
            beta.accumulate_grad(g2.sum(axis=0))
        if x.requires_grad:
            gh = (g2 * gamma.data).astype(np.float64)
            if batch_stats:
                xh64 = xh.astype(np.float64)
                dx = inv * (gh - gh.mean(axis=0) - xh64 * (gh * xh64).mean(axis=0))
            else:
                dx = gh * inv
            x.accumulate_grad(dx.astype(x.dtype).reshape(x.shape))

    return Tensor._make(out_data, (x, gamma, beta), "batch_norm", backward)


def gelu(x: Tensor) -> Tensor:
    """GeLU, tanh approximation."""
    v = x.data
    t = np.tanh(_GELU_C * (v + 0.044715 * v**3))
    out_data = 0.5 * v * (1.0 + t)
    record_flops("gelu", 8 * x.size)

    def backward(g):
        sech2 = 1.0 - t**2
        d = 0.5 * (1.0 + t) + 0.5 * v * sech2 * _GELU_C * (1.0 + 3 * 0.044715 * v**2)
        x.accumulate_grad(g * d)

    return Tensor._make(out_data.astype(x.dtype), (x,), "gelu", backward)


def relu(x: Tensor) -> Tensor:
    record_flops("relu", x.size)

    def backward(g):
        x.accumulate_grad(g * (x.data > 0))

    return Tensor._make(np.maximum(x.data, 0), (x,), "relu", backward)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ weight + bias with weight shaped [in, out]."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear expects last dim {weight.shape[0]}, got {x.shape}")
    out = matmul(x, weight) if x.ndim >= 2 else matmul(x.reshape(1, -1), weight).reshape(-1)
    return out + bias if bias is not None else out


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    norm = ((x * x).sum(axis=axis, keepdims=True) + eps).sqrt()
    return x / norm


def cross_entropy(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Mean negative log-likelihood of integer `targets` under `logits` [N, C]."""
    targets = np.asarray(targets, dtype=np.int64).reshape(-1)
    flat = logits.reshape(-1, logits.shape[-1])
    if flat.shape[0] != targets.shape[0]:
        raise ShapeError(f"{flat.shape[0]} logit rows for {targets.shape[0]} targets")
    logp = log_softmax(flat, axis=-1)
    picked = logp[np.arange(targets.shape[0]), targets]
    return -picked.mean()


def additive_mask(allowed: np.ndarray) -> np.ndarray:
    """Turn a boolean 'may attend' matrix into additive logits."""
    return np.where(np.asarray(allowed, dtype=bool), 0.0, MASK_VALUE).astype(np.float32)


def causal_mask(length: int) -> np.ndarray:
    """Lower-triangular-plus-diagonal additive mask."""
    return additive_mask(np.tril(np.ones((length, length), dtype=bool)))


@dataclass
class AttentionParams:
    """Projection weights of one multi-head attention layer ([in, out] layout)."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor

    @property
    def dim(self) -> int:
        return self.wq.shape[0]


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, length, dim = x.shape
    return x.reshape(*lead, length, heads, dim // heads).swapaxes(-2, -3)


def _merge_heads(x: Tensor) -> Tensor:
    x = x.swapaxes(-2, -3)
    *lead, length, heads, head_dim = x.shape
    return x.reshape(*lead, length, heads * head_dim)


def multi_head_attention(
    q: Tensor,
    k: Tensor,
    v: Tensor,
    params: AttentionParams,
    heads: int,
    mask: Optional[np.ndarray] = None,
) -> Tensor:
    """Scaled dot-product attention per head, concatenated and output-projected.

    Args:
        q: Queries [..., Lq, D].
        k: Keys [..., Lk, D].
        v: Values [..., Lk, D].
        params: Q/K/V/O projections.
        heads: Number of heads; D must be divisible by it.
        mask: Optional additive mask broadcastable to [..., heads, Lq, Lk].
    """
    dim = params.dim
    if dim % heads != 0:
        raise ShapeError(f"model dim {dim} not divisible by {heads} heads")
    for name, t in (("q", q), ("k", k), ("v", v)):
        if t.shape[-1] != dim:
            raise ShapeError(f"{name} has last dim {t.shape[-1]}, expected {dim}")
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(f"keys ({k.shape}) and values ({v.shape}) disagree in length")

    qh = _split_heads(linear(q, params.wq, params.bq), heads)
    kh = _split_heads(linear(k, params.wk, params.bk), heads)
    vh = _split_heads(linear(v, params.wv, params.bv), heads)
    logits = matmul(qh, kh.swapaxes(-1, -2)) * (1.0 / math.sqrt(dim // heads))
    if mask is not None:
        mask = np.asarray(mask, dtype=logits.dtype)
        try:
            np.broadcast_shapes(mask.shape, logits.shape)
        except ValueError as e:
            raise ShapeError(f"mask {mask.shape} does not broadcast to {logits.shape}") from e
        logits = logits + as_tensor(mask, like=logits)
    weights = softmax(logits, axis=-1)
    return linear(_merge_heads(matmul(weights, vh)), params.wo, params.bo)
