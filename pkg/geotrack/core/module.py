"""Parameter containers shared by every model.

A `Module` discovers its parameters, buffers and child modules from its
attributes in assignment order, so names are stable across runs and match the
records written to checkpoints.
"""

from __future__ import annotations

import logging
from typing import Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from geotrack.errors import DataError, ShapeError

from .tensor import Tensor, default_dtype

logger = logging.getLogger(__name__)


class Parameter(Tensor):
    """A trainable leaf tensor."""

    def __init__(self, data, name: str = "", dtype=None) -> None:
        super().__init__(np.array(data, copy=True), requires_grad=True, dtype=dtype, name=name)


def init_normal(rng: np.random.Generator, shape, std: float = 0.02) -> Parameter:
    return Parameter(rng.normal(0.0, std, size=shape))


def init_zeros(shape) -> Parameter:
    return Parameter(np.zeros(shape))


def init_ones(shape) -> Parameter:
    return Parameter(np.ones(shape))


def init_xavier(rng: np.random.Generator, fan_in: int, fan_out: int) -> Parameter:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Parameter(rng.uniform(-limit, limit, size=(fan_in, fan_out)))


class Module:
    """Base class for models built from `Parameter` attributes."""

    def __init__(self) -> None:
        self.training = True
        self._buffer_names: List[str] = []

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        """Attach a non-trainable array (e.g. running statistics) that is checkpointed."""
        setattr(self, name, np.asarray(value, dtype=np.float32).copy())
        if name not in self._buffer_names:
            self._buffer_names.append(name)

    def _children(self) -> Iterator[Tuple[str, object]]:
        for name, value in vars(self).items():
            if name.startswith("_"):
                continue
            if isinstance(value, (Module, Parameter)):
                yield name, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Module, Parameter)):
                        yield f"{name}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[Tuple[str, Parameter]]:
        for name, value in self._children():
            full = f"{prefix}{name}"
            if isinstance(value, Parameter):
                yield full, value
            else:
                yield from value.named_parameters(prefix=f"{full}.")

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, np.ndarray]]:
        for name in self._buffer_names:
            yield f"{prefix}{name}", getattr(self, name)
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(prefix=f"{prefix}{name}.")

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix.rstrip("."), self
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value.named_modules(prefix=f"{prefix}{name}.")

    def parameters(self) -> Dict[str, Parameter]:
        return dict(self.named_parameters())

    def num_parameters(self) -> int:
        return sum(p.size for _, p in self.named_parameters())

    def freeze(self) -> "Module":
        for _, p in self.named_parameters():
            p.requires_grad = False
            p.grad = None
        return self

    def unfreeze(self) -> "Module":
        for _, p in self.named_parameters():
            p.requires_grad = True
        return self

    @property
    def frozen(self) -> bool:
        return all(not p.requires_grad for _, p in self.named_parameters())

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for _, p in self.named_parameters():
            p.grad = None

    def astype(self, dtype=None) -> "Module":
        """Cast every parameter in place (float64 is used by gradient checks)."""
        dtype = np.dtype(dtype or default_dtype())
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        return self

    def state_dict(self) -> Dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, arrays: Mapping[str, np.ndarray], strict: bool = True) -> List[str]:
        """Copy arrays into parameters and buffers; returns the names that were missing."""
        missing = []
        for name, p in self.named_parameters():
            if name not in arrays:
                missing.append(name)
                continue
            value = np.asarray(arrays[name])
            if value.shape != p.shape:
                raise ShapeError(f"checkpoint entry {name} has shape {value.shape}, model {p.shape}")
            p.data = value.astype(p.dtype).copy()
        owners = {name: owner for name, owner in self._buffer_owners()}
        for name, (owner, attr) in owners.items():
            if name not in arrays:
                missing.append(name)
                continue
            setattr(owner, attr, np.asarray(arrays[name], dtype=np.float32).copy())
        if strict and missing:
            raise DataError(f"checkpoint is missing {len(missing)} entries, first: {missing[0]}")
        if missing:
            logger.debug("load_state_dict: %d entries missing", len(missing))
        return missing

    def _buffer_owners(self, prefix: str = "") -> Iterator[Tuple[str, Tuple["Module", str]]]:
        for name in self._buffer_names:
            yield f"{prefix}{name}", (self, name)
        for name, value in self._children():
            if isinstance(value, Module):
                yield from value._buffer_owners(prefix=f"{prefix}{name}.")


def parameter_norm(module: Optional[Module], include: str = "") -> float:
    """L2 norm of all parameters whose name contains `include`."""
    if module is None:
        return 0.0
    total = 0.0
    for name, p in module.named_parameters():
        if include in name:
            total += float(np.sum(p.data.astype(np.float64) ** 2))
    return float(np.sqrt(total))
