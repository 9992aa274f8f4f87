"""geotrack environment variables.

Environment variables configure geotrack without touching code. They are
not the authoritative source: command-line flags and config files win.
"""

from __future__ import annotations

import os
from pathlib import Path
from typing import MutableMapping

import platformdirs

DIR = "GEOTRACK_DIR"
SEED = "GEOTRACK_SEED"
SILENT = "GEOTRACK_SILENT"
CONFIG = "GEOTRACK_CONFIG"
DEBUG = "GEOTRACK_DEBUG"

APP_NAME = "geotrack"

_TRUE = ("y", "yes", "t", "true", "on", "1")
_FALSE = ("n", "no", "f", "false", "off", "0")


def strtobool(val: str) -> bool:
    """Convert a string representation of truth to True or False.

    Raises:
        ValueError: ``val`` is not a recognised truth value.
    """
    val = val.strip().lower()
    if val in _TRUE:
        return True
    if val in _FALSE:
        return False
    raise ValueError(f"invalid truth value {val!r}")


def _env_as_bool(var: str, default: str | None = None, env: MutableMapping | None = None) -> bool:
    if env is None:
        env = os.environ
    val = env.get(var, default)
    if not isinstance(val, str):
        return False
    try:
        return strtobool(val)
    except ValueError:
        return False


def get_dir(default: str | None = None, env: MutableMapping | None = None) -> Path:
    """Directory for debug logs and default outputs."""
    if env is None:
        env = os.environ
    val = env.get(DIR, default)
    if not val:
        val = platformdirs.user_data_dir(APP_NAME)
    return Path(val).expanduser()


def get_seed(default: int | None = None, env: MutableMapping | None = None) -> int | None:
    if env is None:
        env = os.environ
    val = env.get(SEED)
    if val is None or val == "":
        return default
    try:
        return int(val)
    except ValueError:
        raise ValueError(f"{SEED} must be an integer, got {val!r}") from None


def get_config(default: str | None = None, env: MutableMapping | None = None) -> str | None:
    """Path of a key=value config file used when no --config flag is given."""
    if env is None:
        env = os.environ
    return env.get(CONFIG, default) or default


def is_silent(default: str | None = None, env: MutableMapping | None = None) -> bool:
    return _env_as_bool(SILENT, default=default, env=env)


def is_debug(default: str | None = None, env: MutableMapping | None = None) -> bool:
    return _env_as_bool(DEBUG, default=default, env=env)
