"""Shared helpers."""

from .data_utils import make_rng, shuffled_batches, stopwatch_now
from .json_serialization import json_dump_safer, json_dumps_safer, json_friendly, json_friendly_val

__all__ = [
    "make_rng",
    "shuffled_batches",
    "stopwatch_now",
    "json_dump_safer",
    "json_dumps_safer",
    "json_friendly",
    "json_friendly_val",
]
