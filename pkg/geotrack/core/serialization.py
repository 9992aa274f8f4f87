"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"TMCK" | u8 version | u32 len | config text (utf-8, key=value lines)
    u32 count | count x record

    record: u16 name_len | name | u8 dtype | u8 ndim | ndim x u32 dim | data

``dtype`` is 0 for float32 and 1 for float64. float64 arrays (optimizer
moments) keep their precision; every other array is stored as float32.
Version 1 files have no dtype byte and hold float32 only; they still load.
"""

from __future__ import annotations

import hashlib
import io
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Dict, Mapping, Union

import numpy as np

from geotrack.errors import DataError

logger = logging.getLogger(__name__)

MAGIC = b"TMCK"
VERSION = 2
READABLE_VERSIONS = (1, 2)

# record dtype codes
_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODES = {np.dtype(np.float64): 1}

PathLike = Union[str, os.PathLike]


@dataclass
class Checkpoint:
    """Decoded checkpoint: header config plus named arrays."""

    config: Dict[str, str] = field(default_factory=dict)
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)


def _encode_config(config: Mapping[str, object]) -> bytes:
    lines = []
    for key in sorted(config):
        value = str(config[key])
        if "\n" in value or "=" in key:
            raise DataError(f"config entry {key!r} cannot be stored in a checkpoint header")
        lines.append(f"{key}={value}")
    return "\n".join(lines).encode("utf-8")


def _decode_config(text: str) -> Dict[str, str]:
    config = {}
    for line in text.splitlines():
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise DataError(f"malformed checkpoint header line {line!r}")
        config[key] = value
    return config


def write_checkpoint(stream: BinaryIO, arrays: Mapping[str, np.ndarray], config: Mapping[str, object]) -> None:
    header = _encode_config(config)
    stream.write(MAGIC)
    stream.write(struct.pack("<BI", VERSION, len(header)))
    stream.write(header)
    stream.write(struct.pack("<I", len(arrays)))
    for name in arrays:
        source = np.asarray(arrays[name])
        code = _CODES.get(source.dtype, 0)
        value = np.asarray(source, dtype=_DTYPES[code], order="C")
        encoded = name.encode("utf-8")
        stream.write(struct.pack("<H", len(encoded)))
        stream.write(encoded)
        stream.write(struct.pack("<BB", code, value.ndim))
        stream.write(struct.pack(f"<{value.ndim}I", *value.shape))
        stream.write(value.tobytes())


def _read_exact(stream: BinaryIO, size: int, what: str) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise DataError(f"checkpoint truncated while reading {what}")
    return data


def read_checkpoint(stream: BinaryIO) -> Checkpoint:
    if _read_exact(stream, 4, "magic") != MAGIC:
        raise DataError("not a checkpoint file (bad magic)")
    version, header_len = struct.unpack("<BI", _read_exact(stream, 5, "header"))
    if version not in READABLE_VERSIONS:
        raise DataError(f"unsupported checkpoint version {version}")
    config = _decode_config(_read_exact(stream, header_len, "config").decode("utf-8"))
    (count,) = struct.unpack("<I", _read_exact(stream, 4, "record count"))
    arrays: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(stream, 2, "name length"))
        name = _read_exact(stream, name_len, "name").decode("utf-8")
        code = 0
        if version >= 2:
            (code,) = struct.unpack("<B", _read_exact(stream, 1, "dtype"))
            if code not in _DTYPES:
                raise DataError(f"unknown dtype code {code} for {name!r}")
        dtype = _DTYPES[code]
        (ndim,) = struct.unpack("<B", _read_exact(stream, 1, "rank"))
        shape = struct.unpack(f"<{ndim}I", _read_exact(stream, 4 * ndim, "shape"))
        size = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        raw = _read_exact(stream, dtype.itemsize * size, name)
        arrays[name] = np.frombuffer(raw, dtype=dtype).astype(dtype.type).reshape(shape)
    return Checkpoint(config=config, arrays=arrays)


def checkpoint_bytes(arrays: Mapping[str, np.ndarray], config: Mapping[str, object] = None) -> bytes:
    buf = io.BytesIO()
    write_checkpoint(buf, arrays, config or {})
    return buf.getvalue()


def save_checkpoint(path: PathLike, arrays: Mapping[str, np.ndarray], config: Mapping[str, object] = None) -> Path:
    """Write a checkpoint atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as f:
        write_checkpoint(f, arrays, config or {})
    os.replace(tmp, path)
    logger.info("wrote checkpoint %s (%d arrays)", path, len(arrays))
    return path


def load_checkpoint(path: PathLike) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise DataError("checkpoint not found", path=str(path))
    with open(path, "rb") as f:
        try:
            return read_checkpoint(f)
        except DataError as e:
            raise DataError(e.message, path=str(path)) from e


def weights_digest(arrays: Mapping[str, np.ndarray]) -> str:
    """SHA-256 of the serialized arrays (no header), used for freeze checks."""
    return hashlib.sha256(checkpoint_bytes(arrays)).hexdigest()
