"""Adam optimizer over named parameter tensors."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Mapping, Optional

import numpy as np

from geotrack.errors import ShapeError

from .tensor import Tensor


@dataclass
class AdamState:
    """Moment buffers and hyperparameters for one optimizer instance.

    Buffers are created lazily the first time a parameter receives a
    gradient and always share that parameter's shape.
    """

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)

    def buffers(self, name: str, like: np.ndarray):
        if name not in self.m:
            self.m[name] = np.zeros(like.shape, dtype=np.float64)
            self.v[name] = np.zeros(like.shape, dtype=np.float64)
        return self.m[name], self.v[name]

    def state_dict(self) -> Dict[str, np.ndarray]:
        out: Dict[str, np.ndarray] = {}
        for name in self.m:
            out[f"adam.m.{name}"] = self.m[name]
            out[f"adam.v.{name}"] = self.v[name]
        return out

    def load_state_dict(self, arrays: Mapping[str, np.ndarray], step: int) -> None:
        self.step = int(step)
        for key, value in arrays.items():
            kind, _, name = key.partition(".")[2].partition(".")
            target = self.m if kind == "m" else self.v
            target[name] = np.asarray(value, dtype=np.float64).copy()


def adam_step(
    params: Mapping[str, Tensor],
    state: AdamState,
    grads: Optional[Mapping[str, Optional[np.ndarray]]] = None,
) -> None:
    """Apply one bias-corrected Adam update in place.

    Args:
        params: Parameters keyed by name. Frozen parameters (requires_grad
            False) are never touched.
        state: Optimizer state, updated in place.
        grads: Optional explicit gradients; defaults to each tensor's `.grad`.
    """
    state.step += 1
    t = state.step
    correction1 = 1.0 - state.beta1**t
    correction2 = 1.0 - state.beta2**t
    for name, param in params.items():
        if not param.requires_grad:
            continue
        grad = grads.get(name) if grads is not None else param.grad
        if grad is None:
            continue
        grad = np.asarray(grad, dtype=np.float64)
        if grad.shape != param.shape:
            raise ShapeError(f"gradient for {name} has shape {grad.shape}, parameter {param.shape}")
        m, v = state.buffers(name, param.data)
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        update = state.lr * (m / correction1) / (np.sqrt(v / correction2) + state.eps)
        param.data -= update.astype(param.dtype)


def global_grad_norm(params: Mapping[str, Tensor]) -> float:
    """L2 norm over every available gradient buffer."""
    total = 0.0
    for param in params.values():
        if param.grad is not None:
            total += float(np.sum(param.grad.astype(np.float64) ** 2))
    return float(np.sqrt(total))
