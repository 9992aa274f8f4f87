"""Saving and restoring the trained models.

Every checkpoint header carries the model's ``kind`` and its config keys,
so a model can be rebuilt from the file alone.
"""

import logging
import os
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import numpy as np

from geotrack.core.module import Module
from geotrack.core.serialization import Checkpoint, load_checkpoint, save_checkpoint, weights_digest
from geotrack.errors import DataError
from geotrack.models.adapter import AdapterConfig, AdapterState, UnifiedModel
from geotrack.models.encoder import EncoderConfig, ViewEncoder
from geotrack.models.retriever import RetrieverConfig, TransRetriever

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

VIEWS = ("street", "aerial")

ENCODER_FILE = "{view}.ckpt"
ADAPTER_FILE = "{view}_adapter.ckpt"
BASELINE_FILE = "{view}_baseline.ckpt"
RETRIEVER_FILE = "retriever.ckpt"


def encoder_path(directory: PathLike, view: str) -> Path:
    return Path(directory) / ENCODER_FILE.format(view=view)


def adapter_path(directory: PathLike, view: str) -> Path:
    return Path(directory) / ADAPTER_FILE.format(view=view)


def baseline_path(directory: PathLike, view: str) -> Path:
    return Path(directory) / BASELINE_FILE.format(view=view)


def retriever_path(directory: PathLike) -> Path:
    return Path(directory) / RETRIEVER_FILE


def save_model(path: PathLike, module: Module, extra: Optional[Mapping[str, object]] = None) -> Path:
    """Write ``module.state_dict()`` under its own header."""
    header: Dict[str, object] = dict(module.header())  # type: ignore[attr-defined]
    header.update(extra or {})
    return save_checkpoint(path, module.state_dict(), header)


def _expect(ckpt: Checkpoint, kind: str, path: PathLike) -> None:
    found = ckpt.config.get("kind")
    if found != kind:
        raise DataError(f"expected a {kind} checkpoint, found {found!r}", path=str(path))


def load_encoder(path: PathLike) -> ViewEncoder:
    ckpt = load_checkpoint(path)
    _expect(ckpt, "encoder", path)
    encoder = ViewEncoder(EncoderConfig.from_header(ckpt.config), view=ckpt.config.get("view", ""))
    encoder.load_state_dict(ckpt.arrays)
    return encoder


def load_unified(encoder_file: PathLike, adapter_file: Optional[PathLike] = None) -> UnifiedModel:
    """A frozen encoder with its adapters; fresh (identity) adapters when no file is given."""
    encoder = load_encoder(encoder_file).freeze()
    if adapter_file is None:
        return UnifiedModel(encoder)
    ckpt = load_checkpoint(adapter_file)
    _expect(ckpt, "adapter", adapter_file)
    state = AdapterState(encoder, AdapterConfig.from_header(ckpt.config))
    state.load_state_dict(ckpt.arrays)
    return UnifiedModel(encoder, state)


def load_retriever(path: PathLike) -> TransRetriever:
    ckpt = load_checkpoint(path)
    _expect(ckpt, "retriever", path)
    model = TransRetriever(RetrieverConfig.from_header(ckpt.config))
    model.load_state_dict(ckpt.arrays)
    return model.eval()


def encoder_digest(*encoders: ViewEncoder) -> str:
    """One hash over the weights of all given encoders."""
    arrays: Dict[str, np.ndarray] = {}
    for encoder in encoders:
        arrays.update({f"{encoder.view}.{k}": v for k, v in encoder.state_dict().items()})
    return weights_digest(arrays)
