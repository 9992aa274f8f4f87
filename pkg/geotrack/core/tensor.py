"""Dense tensors with reverse-mode automatic differentiation.

A `Tensor` wraps a contiguous numpy array (float32 unless a wider precision is
active) together with an optional gradient buffer. Every differentiable
operation records its parents and a backward closure; `GradTape` orders the
recorded graph topologically and replays the closures in reverse.
"""

from __future__ import annotations

import contextlib
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from geotrack.errors import ShapeError

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]

_state = threading.local()


def _get_state(name: str, default):
    return getattr(_state, name, default)


def default_dtype() -> np.dtype:
    """The dtype new tensors are created with on this thread."""
    return _get_state("dtype", np.dtype(np.float32))


@contextlib.contextmanager
def precision(dtype) -> Iterator[None]:
    """Create new tensors with `dtype` inside the block (used by gradient checks)."""
    previous = default_dtype()
    _state.dtype = np.dtype(dtype)
    try:
        yield
    finally:
        _state.dtype = previous


def is_grad_enabled() -> bool:
    return _get_state("grad_enabled", True)


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording inside the block."""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


@dataclass
class OpCounter:
    """Floating point operation tally, collected by `count_ops()`."""

    flops: int = 0
    by_op: Counter = field(default_factory=Counter)

    def add(self, op: str, flops: int) -> None:
        self.flops += int(flops)
        self.by_op[op] += int(flops)


@contextlib.contextmanager
def count_ops() -> Iterator[OpCounter]:
    """Count forward FLOPs of every tensor op executed inside the block."""
    counters = _get_state("counters", [])
    counter = OpCounter()
    _state.counters = counters + [counter]
    try:
        yield counter
    finally:
        _state.counters = counters


def record_flops(op: str, flops: int) -> None:
    for counter in _get_state("counters", []):
        counter.add(op, flops)


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return np.asarray(grad)


class Tensor:
    """An n-dimensional array node in the autodiff graph."""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        dtype=None,
        name: str = "",
    ) -> None:
        if isinstance(data, Tensor):
            data = data.data.copy()
        self.data = np.asarray(data, dtype=dtype or default_dtype(), order="C")
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: Tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._op = ""

    @classmethod
    def _make(
        cls,
        data: np.ndarray,
        parents: Tuple["Tensor", ...],
        op: str,
        backward: Callable[[np.ndarray], None],
    ) -> "Tensor":
        out = cls.__new__(cls)
        out.data = np.asarray(data, order="C")
        out.grad = None
        out.name = ""
        out._op = op
        needs = is_grad_enabled() and any(p.requires_grad for p in parents)
        out.requires_grad = needs
        out._parents = parents if needs else ()
        out._backward = backward if needs else None
        return out

    # ------------------------------------------------------------------ basics

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return self.shape[0]

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.size == 1 else float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.dtype)

    def astype(self, dtype) -> "Tensor":
        """Copy into a new leaf tensor of `dtype`, keeping `requires_grad`."""
        return Tensor(self.data, requires_grad=self.requires_grad, dtype=dtype, name=self.name)

    def zero_grad(self) -> None:
        self.grad = None

    def accumulate_grad(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        grad = np.asarray(grad, dtype=self.dtype)
        if grad.shape != self.shape:
            grad = _unbroadcast(grad, self.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad += grad

    def backward(self, grad: Optional[np.ndarray] = None) -> "GradTape":
        """Backpropagate from this tensor; returns the tape that was replayed."""
        tape = GradTape(self)
        tape.backward(grad)
        return tape

    # -------------------------------------------------------------- arithmetic

    def __add__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other, like=self)
        record_flops("add", max(self.size, other.size))

        def backward(g):
            if self.requires_grad:
                self.accumulate_grad(g)
            if other.requires_grad:
                other.accumulate_grad(g)

        return Tensor._make(self.data + other.data, (self, other), "add", backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def backward(g):
            self.accumulate_grad(-g)

        return Tensor._make(-self.data, (self,), "neg", backward)

    def __sub__(self, other: ArrayLike) -> "Tensor":
        return self + (-as_tensor(other, like=self))

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other, like=self) + (-self)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other, like=self)
        record_flops("mul", max(self.size, other.size))

        def backward(g):
            if self.requires_grad:
                self.accumulate_grad(g * other.data)
            if other.requires_grad:
                other.accumulate_grad(g * self.data)

        return Tensor._make(self.data * other.data, (self, other), "mul", backward)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        other = as_tensor(other, like=self)
        record_flops("div", max(self.size, other.size))
        out_data = self.data / other.data

        def backward(g):
            if self.requires_grad:
                self.accumulate_grad(g / other.data)
            if other.requires_grad:
                other.accumulate_grad(-g * out_data / other.data)

        return Tensor._make(out_data, (self, other), "div", backward)

    def __rtruediv__(self, other: ArrayLike) -> "Tensor":
        return as_tensor(other, like=self) / self

    def __pow__(self, exponent: float) -> "Tensor":
        exponent = float(exponent)
        record_flops("pow", self.size)

        def backward(g):
            self.accumulate_grad(g * exponent * self.data ** (exponent - 1.0))

        return Tensor._make(self.data**exponent, (self,), "pow", backward)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    # ------------------------------------------------------------ elementwise

    def exp(self) -> "Tensor":
        out_data = np.exp(self.data)
        record_flops("exp", self.size)

        def backward(g):
            self.accumulate_grad(g * out_data)

        return Tensor._make(out_data, (self,), "exp", backward)

    def log(self) -> "Tensor":
        record_flops("log", self.size)

        def backward(g):
            self.accumulate_grad(g / self.data)

        return Tensor._make(np.log(self.data), (self,), "log", backward)

    def sqrt(self) -> "Tensor":
        out_data = np.sqrt(self.data)
        record_flops("sqrt", self.size)

        def backward(g):
            self.accumulate_grad(g * 0.5 / out_data)

        return Tensor._make(out_data, (self,), "sqrt", backward)

    def tanh(self) -> "Tensor":
        out_data = np.tanh(self.data)
        record_flops("tanh", self.size)

        def backward(g):
            self.accumulate_grad(g * (1.0 - out_data**2))

        return Tensor._make(out_data, (self,), "tanh", backward)

    def softplus(self) -> "Tensor":
        """log(1 + exp(x)), evaluated without overflow."""
        x = self.data
        out_data = np.logaddexp(0.0, x).astype(self.dtype)
        record_flops("softplus", self.size)

        def backward(g):
            sig = np.exp(-np.logaddexp(0.0, -x)).astype(self.dtype)
            self.accumulate_grad(g * sig)

        return Tensor._make(out_data, (self,), "softplus", backward)

    # -------------------------------------------------------------- reductions

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        out_data = self.data.sum(axis=axis, keepdims=keepdims, dtype=np.float64).astype(self.dtype)
        record_flops("sum", self.size)
        shape = self.shape

        def backward(g):
            if axis is not None and not keepdims:
                axes = (axis,) if isinstance(axis, int) else tuple(axis)
                axes = tuple(sorted(a % len(shape) for a in axes))
                for a in axes:
                    g = np.expand_dims(g, a)
            self.accumulate_grad(np.broadcast_to(g, shape))

        return Tensor._make(np.asarray(out_data), (self,), "sum", backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # ------------------------------------------------------------ shape ops

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old_shape = self.shape
        try:
            out_data = self.data.reshape(shape)
        except ValueError as e:
            raise ShapeError(f"cannot reshape {old_shape} to {shape}") from e

        def backward(g):
            self.accumulate_grad(g.reshape(old_shape))

        return Tensor._make(out_data, (self,), "reshape", backward)

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = tuple(np.argsort(axes))

        def backward(g):
            self.accumulate_grad(g.transpose(inverse))

        return Tensor._make(self.data.transpose(axes), (self,), "transpose", backward)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(tuple(axes))

    @property
    def T(self) -> "Tensor":  # noqa: N802
        return self.transpose()

    def __getitem__(self, key) -> "Tensor":
        if isinstance(key, Tensor):
            key = key.data.astype(np.int64)
        shape = self.shape

        fancy = any(
            isinstance(k, (np.ndarray, list)) for k in (key if isinstance(key, tuple) else (key,))
        )

        def backward(g):
            full = np.zeros(shape, dtype=self.dtype)
            if fancy:
                np.add.at(full, key, g)
            else:
                full[key] += g
            self.accumulate_grad(full)

        return Tensor._make(self.data[key], (self,), "index", backward)


def as_tensor(value: ArrayLike, like: Optional[Tensor] = None) -> Tensor:
    """Wrap non-tensors as constant tensors (matching `like`'s dtype)."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value, dtype=like.dtype if like is not None else None)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes, with broadcasting."""
    a, b = as_tensor(a), as_tensor(b, like=a)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out_data = np.matmul(a.data, b.data)
    record_flops("matmul", 2 * out_data.size * a.shape[-1])

    def backward(g):
        if a.requires_grad:
            a.accumulate_grad(np.matmul(g, np.swapaxes(b.data, -1, -2)))
        if b.requires_grad:
            b.accumulate_grad(np.matmul(np.swapaxes(a.data, -1, -2), g))

    return Tensor._make(out_data, (a, b), "matmul", backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along an existing axis."""
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    out_data = np.concatenate([t.data for t in tensors], axis=axis)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(int(start), int(stop))
                t.accumulate_grad(g[tuple(index)])

    return Tensor._make(out_data, tuple(tensors), "concat", backward)


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Join tensors along a new axis."""
    tensors = [as_tensor(t) for t in tensors]
    out_data = np.stack([t.data for t in tensors], axis=axis)

    def backward(g):
        for i, t in enumerate(tensors):
            if t.requires_grad:
                t.accumulate_grad(np.take(g, i, axis=axis))

    return Tensor._make(out_data, tuple(tensors), "stack", backward)


class GradTape:
    """Topologically ordered record of the graph below a root tensor.

    Nodes are stored parents-first, so replaying them in reverse visits every
    node exactly once, after all of its consumers.
    """

    def __init__(self, root: Tensor) -> None:
        self.root = root
        self.nodes: List[Tensor] = []
        visited = set()
        stack_: List[Tuple[Tensor, bool]] = [(root, False)]
        while stack_:
            node, expanded = stack_.pop()
            if expanded:
                self.nodes.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack_.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack_.append((parent, False))

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def ops(self) -> List[str]:
        return [node._op for node in self.nodes if node._op]

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        root = self.root
        if not root.requires_grad:
            return
        if grad is None:
            if root.size != 1:
                raise ShapeError(f"backward without a seed gradient needs a scalar, got {root.shape}")
            grad = np.ones_like(root.data)
        root.accumulate_grad(grad)
        for node in reversed(self.nodes):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
                if node is not root and node._parents:
                    # interior buffers are not needed once propagated
                    node.grad = None
