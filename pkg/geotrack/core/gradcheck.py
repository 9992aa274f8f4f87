"""Central finite-difference gradient checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np

from .tensor import Tensor, precision

# mixed into the projection seed so the weights never replay an input stream
_PROJECTION_SALT = 0x6772_6164


@dataclass
class GradcheckResult:
    """Worst scaled error per input.

    An entry passes when ``|a - n| <= atol + rtol * max(|a|, |n|)``; the stored
    error is ``|a - n| / (atol / rtol + max(|a|, |n|))`` so that test is
    ``error <= rtol``.
    """

    errors: List[float]
    rtol: float = 1e-3

    @property
    def max_error(self) -> float:
        return max(self.errors) if self.errors else 0.0

    def ok(self, tol: Optional[float] = None) -> bool:
        return self.max_error <= (self.rtol if tol is None else tol)


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """max |a - n| / (floor + max(|a|, |n|)), elementwise worst case."""
    if not analytic.size:
        return 0.0
    scale = floor + np.maximum(np.abs(analytic), np.abs(numeric))
    return float(np.max(np.abs(analytic - numeric) / scale))


def projection_weights(shape, seed: int) -> np.ndarray:
    return np.random.default_rng([_PROJECTION_SALT, seed]).normal(size=shape)


def gradcheck(
    fn: Callable[..., Tensor],
    inputs: Sequence[np.ndarray],
    h: float = 1e-3,
    seed: int = 0,
    atol: float = 1e-6,
    rtol: float = 1e-3,
) -> GradcheckResult:
    """Compare reverse-mode gradients of `fn` with central differences.

    `fn` receives one float64 `Tensor` per input and may return any shape; a
    fixed random projection reduces it to a scalar. The check runs under
    float64 precision so the step `h` is not swamped by rounding. `atol`
    absorbs the O(h^2) truncation noise on entries whose true gradient is ~0.
    """
    with precision(np.float64):
        arrays = [np.asarray(x, dtype=np.float64).copy() for x in inputs]
        sample = fn(*[Tensor(a) for a in arrays])
        weights = projection_weights(sample.shape, seed)

        def scalar(values):
            out = fn(*[Tensor(v) for v in values])
            return float(np.sum(out.data * weights))

        tensors = [Tensor(a, requires_grad=True) for a in arrays]
        out = fn(*tensors)
        (out * Tensor(weights)).sum().backward()

        errors = []
        for i, a in enumerate(arrays):
            analytic = tensors[i].grad if tensors[i].grad is not None else np.zeros_like(a)
            numeric = np.zeros_like(a)
            flat = a.reshape(-1)
            for j in range(flat.size):
                saved = flat[j]
                flat[j] = saved + h
                plus = scalar(arrays)
                flat[j] = saved - h
                minus = scalar(arrays)
                flat[j] = saved
                numeric.reshape(-1)[j] = (plus - minus) / (2 * h)
            errors.append(relative_error(analytic, numeric, floor=atol / rtol))
        return GradcheckResult(errors=errors, rtol=rtol)
