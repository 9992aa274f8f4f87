"""JSON serialization for numpy-bearing results, records and reports."""

import json
import math
from dataclasses import asdict, is_dataclass
from datetime import date, datetime
from enum import Enum
from pathlib import Path
from typing import IO, Any, Mapping, Sequence, Tuple

import numpy as np


def json_friendly(obj: Any) -> Tuple[Any, bool]:
    """Convert an object into something that's more becoming of JSON."""
    if isinstance(obj, np.ndarray):
        return (obj.item() if obj.ndim == 0 else obj.tolist()), True
    if isinstance(obj, np.generic):
        return obj.item(), True
    if isinstance(obj, (datetime, date)):
        return obj.isoformat(), True
    if isinstance(obj, Enum):
        return obj.value, True
    if isinstance(obj, Path):
        return str(obj), True
    if is_dataclass(obj) and not isinstance(obj, type):
        return asdict(obj), True
    if hasattr(obj, "model_dump"):
        return obj.model_dump(), True
    return obj, False


def json_friendly_val(val: Any) -> Any:
    """Make any value (including dict, sequence, dataclass) JSON friendly."""
    if isinstance(val, dict):
        return {str(key): json_friendly_val(value) for key, value in val.items()}
    if isinstance(val, (list, tuple)):
        return [json_friendly_val(item) for item in val]
    converted, changed = json_friendly(val)
    if changed:
        return json_friendly_val(converted)
    return converted


class GeotrackJSONEncoder(json.JSONEncoder):
    """A JSON encoder that handles numpy values, dataclasses and pydantic models."""

    def default(self, obj: Any) -> Any:
        tmp_obj, converted = json_friendly(obj)
        if converted:
            return tmp_obj
        return json.JSONEncoder.default(self, obj)


def make_safe_for_json(obj: Any) -> Any:
    """Replace invalid json floats with strings. Also converts to lists and dicts."""
    if isinstance(obj, Mapping):
        return {k: make_safe_for_json(v) for k, v in obj.items()}
    elif isinstance(obj, str):
        return obj
    elif isinstance(obj, Sequence):
        return [make_safe_for_json(v) for v in obj]
    elif isinstance(obj, float):
        if math.isnan(obj):
            return "NaN"
        elif math.isinf(obj):
            return "Infinity" if obj > 0 else "-Infinity"
        return obj
    return obj


def json_dump_safer(obj: Any, fp: IO[str], **kwargs: Any) -> None:
    """Convert obj to json, with some extra encodable types."""
    return json.dump(make_safe_for_json(json_friendly_val(obj)), fp, cls=GeotrackJSONEncoder, **kwargs)


def json_dumps_safer(obj: Any, **kwargs: Any) -> str:
    """Convert obj to json, with some extra encodable types."""
    return json.dumps(make_safe_for_json(json_friendly_val(obj)), cls=GeotrackJSONEncoder, **kwargs)


__all__ = [
    "json_friendly",
    "json_friendly_val",
    "GeotrackJSONEncoder",
    "make_safe_for_json",
    "json_dump_safer",
    "json_dumps_safer",
]
