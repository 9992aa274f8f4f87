"""Plain key=value configuration files.

One setting per line, ``#`` starts a comment, dotted keys address a
section (``encoder.depth = 4``). Values are coerced to bool, int or float
when they look like one, otherwise kept as strings. Command-line flags
override the file, and the file overrides the defaults.
"""

import logging
import os
import re
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Union

from pydantic import BaseModel, Field, ValidationError, field_validator, model_validator

from geotrack.errors import DataError, UsageError
from geotrack.models.adapter import AdapterConfig
from geotrack.models.encoder import EncoderConfig
from geotrack.models.retriever import RetrieverConfig

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

_KEY = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")
SECTIONS = ("encoder", "adapter", "retriever", "schedule", "scene")


def coerce(value: str) -> Any:
    """Best-effort typed value of a config string."""
    text = value.strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    return text


def parse_config(text: str, path: Optional[str] = None) -> Dict[str, Any]:
    """Parse key=value text into a flat dict of dotted keys.

    Raises:
        DataError: A line is not ``key = value`` or a key repeats.
    """
    settings: Dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not _KEY.match(key):
            raise DataError(f"expected 'key = value', got {raw.strip()!r}", path=path, line=lineno)
        if key in settings:
            raise DataError(f"duplicate key {key!r}", path=path, line=lineno)
        settings[key] = coerce(value)
    return settings


class ConfigManager:
    """Settings loaded from one key=value file."""

    def __init__(self, path: Optional[PathLike] = None) -> None:
        self.path = Path(path) if path is not None else None
        self._settings: Dict[str, Any] = {}
        if self.path is not None:
            self._load_settings()

    def _load_settings(self) -> None:
        assert self.path is not None
        if not self.path.exists():
            raise DataError("config file not found", path=str(self.path))
        self._settings = parse_config(self.path.read_text(encoding="utf-8"), path=str(self.path))
        logger.info("loaded %d settings from %s", len(self._settings), self.path)

    def save(self, path: Optional[PathLike] = None) -> Path:
        target = Path(path) if path is not None else self.path
        if target is None:
            raise UsageError("config manager has no file to save to")
        target.parent.mkdir(parents=True, exist_ok=True)
        lines = [f"{key} = {value}" for key, value in sorted(self._settings.items())]
        target.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return target

    def get(self, key: str, default: Any = None) -> Any:
        return self._settings.get(key, default)

    def set(self, key: str, value: Any) -> None:
        if not _KEY.match(key):
            raise UsageError(f"invalid config key {key!r}")
        self._settings[key] = value

    def delete(self, key: str) -> None:
        self._settings.pop(key, None)

    def update(self, settings: Mapping[str, Any]) -> None:
        for key, value in settings.items():
            self.set(key, value)

    def section(self, name: str) -> Dict[str, Any]:
        """Settings under ``name.``, with the prefix stripped."""
        prefix = f"{name}."
        return {k[len(prefix) :]: v for k, v in self._settings.items() if k.startswith(prefix)}

    @property
    def settings(self) -> Dict[str, Any]:
        return self._settings.copy()


def resolve(
    defaults: Mapping[str, Any],
    file: Optional[Mapping[str, Any]] = None,
    cli: Optional[Mapping[str, Any]] = None,
) -> Dict[str, Any]:
    """Merge settings: CLI flags over the config file over the defaults.

    CLI values of None mean "flag not given" and never override.
    """
    merged = dict(defaults)
    merged.update(file or {})
    merged.update({k: v for k, v in (cli or {}).items() if v is not None})
    return merged


def _nested(settings: Mapping[str, Any], sections: Iterable[str]) -> Dict[str, Any]:
    values: Dict[str, Any] = {}
    for key, value in settings.items():
        head, _, rest = key.partition(".")
        if rest and head in sections:
            values.setdefault(head, {})[rest] = value
        elif rest:
            raise UsageError(f"unknown config section {head!r} in key {key!r}")
        else:
            values[key] = value
    return values


class RunConfig(BaseModel):
    """Everything one CLI invocation runs with, validated before any work starts."""

    subcommand: str
    dataset: Optional[str] = None
    checkpoints: Optional[str] = None
    galleries: Optional[str] = None
    out: Optional[str] = None
    seed: int = 0
    method: str = "dp"
    lam: float = Field(50.0, ge=0)
    candidates: int = Field(10, ge=1)
    top_t: str = "1"
    encoder: EncoderConfig = Field(default_factory=EncoderConfig)
    adapter: AdapterConfig = Field(default_factory=AdapterConfig)
    retriever: RetrieverConfig = Field(default_factory=RetrieverConfig)
    schedule: Dict[str, Any] = Field(default_factory=dict)
    scene: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("top_t", mode="before")
    @classmethod
    def _top_t(cls, value: Any) -> str:
        text = str(value).strip().lower()
        if text in ("1%", "all") or (text.isdigit() and int(text) > 0):
            return text
        raise ValueError(f"must be a positive integer, '1%' or 'all', got {value!r}")

    @model_validator(mode="after")
    def _check_method(self):
        methods = ("nn", "ds", "dp", "transretriever")
        if self.method not in methods:
            raise ValueError(f"method must be one of {methods}, got {self.method!r}")
        if self.method == "transretriever" and self.subcommand == "retrieve" and not self.checkpoints:
            raise ValueError("method transretriever needs --checkpoints with a trained retriever")
        return self

    @classmethod
    def build(cls, subcommand: str, settings: Mapping[str, Any]) -> "RunConfig":
        """Validate flat dotted settings; errors become `UsageError`.

        Top-level keys the model does not know are ignored, sections are not.
        """
        values = _nested(settings, SECTIONS)
        known = {k: v for k, v in values.items() if k in cls.model_fields}
        known["subcommand"] = subcommand
        try:
            return cls.model_validate(known)
        except ValidationError as e:
            first = e.errors()[0]
            loc = ".".join(str(part) for part in first["loc"]) or "config"
            raise UsageError(f"invalid setting {loc}: {first['msg']}") from e
