"""Base models and enums for geotrack records.

This module contains the building blocks for the JSON records geotrack writes:
training metrics, run summaries and evaluation reports.
"""

import json
from dataclasses import asdict, dataclass, fields
from datetime import datetime
from enum import Enum
from typing import Any, Dict

from geotrack.utils.json_serialization import json_friendly_val


class RecordType(Enum):
    """Kinds of records written to metrics files."""

    HISTORY = "history"
    SUMMARY = "summary"
    RECALL = "recall"
    BENCH = "bench"


class Stage(Enum):
    """Training stages."""

    IMAGE = "image"
    ADAPTER = "adapter"
    BASELINE = "baseline"
    RETRIEVER = "retriever"


@dataclass
class BaseModel:
    """Base class for all data models with JSON serialization."""

    def to_dict(self) -> dict:
        """Convert to dictionary, handling nested objects."""

        def convert(obj):
            if hasattr(obj, "to_dict"):
                return obj.to_dict()
            elif isinstance(obj, Enum):
                return obj.value
            elif isinstance(obj, list):
                return [convert(item) for item in obj]
            elif isinstance(obj, dict):
                return {k: convert(v) for k, v in obj.items()}
            elif isinstance(obj, datetime):
                return obj.isoformat()
            return json_friendly_val(obj)

        data = {}
        for key, value in asdict(self).items():
            if value is not None:
                data[key] = convert(value)
        return data

    def to_json(self) -> str:
        """Convert to JSON string."""
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, json_str: str):
        """Create instance from JSON string."""
        return cls.from_dict(json.loads(json_str))

    @classmethod
    def from_dict(cls, data: dict):
        """Create instance from dictionary, ignoring unknown keys."""
        known = {f.name: f for f in fields(cls)}
        kwargs: Dict[str, Any] = {}
        for key, value in data.items():
            if key not in known:
                continue
            if key == "record_type" and isinstance(value, str):
                value = RecordType(value)
            elif key == "stage" and isinstance(value, str):
                value = Stage(value)
            kwargs[key] = value
        return cls(**kwargs)
