"""Human-readable progress lines on stderr.

stdout is reserved for the JSON result of each command, so everything meant
for a person goes through these functions. In silent mode the lines go to a
fallback logger instead.
"""

from __future__ import annotations

import logging
import sys
import threading
from typing import Protocol

import click

PREFIX = click.style("geotrack", fg="blue", bold=True)

_TAGS = {
    logging.INFO: "",
    logging.WARNING: click.style("WARNING", fg="yellow"),
    logging.ERROR: click.style("ERROR", bg="red", fg="green"),
}

# messages remembered for repeat=False, capped
_SEEN_LIMIT = 1000


class SupportsLeveledLogging(Protocol):
    """Portion of the standard logging.Logger used in this module."""

    def log(self, level: int, msg: str) -> None: ...


class _TermState:
    def __init__(self) -> None:
        self.silent = False
        self.logger: SupportsLeveledLogging | None = None
        self.seen: set[str] = set()
        self.lock = threading.Lock()


_state = _TermState()


def termsetup(silent: bool, logger: SupportsLeveledLogging | None) -> None:
    """Route later messages to `logger` when `silent`, to stderr otherwise."""
    with _state.lock:
        _state.silent = silent
        _state.logger = logger


def termlog(string: str = "", newline: bool = True, repeat: bool = True, prefix: bool = True) -> None:
    """Print an informational line.

    Args:
        string: The message, possibly several lines.
        newline: End with a newline.
        repeat: When false, a message already shown once is dropped.
        prefix: Start every line with ``geotrack:``.
    """
    _emit(string, logging.INFO, newline, repeat, prefix)


def termwarn(string: str, newline: bool = True, repeat: bool = True, prefix: bool = True) -> None:
    _emit(string, logging.WARNING, newline, repeat, prefix)


def termerror(string: str, newline: bool = True, repeat: bool = True, prefix: bool = True) -> None:
    _emit(string, logging.ERROR, newline, repeat, prefix)


def _decorate(string: str, level: int, prefix: bool) -> str:
    lines = string.split("\n")
    tag = _TAGS[level]
    if tag:
        lines = [f"{tag} {line}" for line in lines]
    if prefix:
        lines = [f"{PREFIX}: {line}" for line in lines]
    return "\n".join(lines)


def _emit(string: str, level: int, newline: bool, repeat: bool, prefix: bool) -> None:
    text = _decorate(string, level, prefix)
    with _state.lock:
        if not repeat:
            if text in _state.seen:
                return
            if len(_state.seen) < _SEEN_LIMIT:
                _state.seen.add(text)
        if not _state.silent:
            click.echo(text, file=sys.stderr, nl=newline)
        elif _state.logger is not None:
            _state.logger.log(level, click.unstyle(text))
