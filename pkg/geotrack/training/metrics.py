"""JSON-lines metrics files for training runs."""

import json
import logging
import os
import threading
from pathlib import Path
from typing import Iterator, List, Optional, Union

from geotrack.core.base_models import BaseModel, RecordType
from geotrack.core.records import HistoryRecord, SummaryRecord
from geotrack.errors import DataError
from geotrack.utils.json_serialization import json_dumps_safer

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]


class MetricsWriter:
    """Append history and summary records to a ``.jsonl`` file.

    Writes are serialised under a lock; every line is flushed so a killed
    run leaves a readable file.
    """

    def __init__(self, path: Optional[PathLike], append: bool = False) -> None:
        self.path = Path(path) if path is not None else None
        self._lock = threading.Lock()
        self._file = None
        self._written = 0
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._file = open(self.path, "a" if append else "w", encoding="utf-8")

    def write(self, record: BaseModel) -> None:
        with self._lock:
            self._written += 1
            if self._file is None:
                return
            self._file.write(json_dumps_safer(record.to_dict()) + "\n")
            self._file.flush()

    def history(self, record: HistoryRecord) -> None:
        logger.debug("step %d epoch %d loss %.6f", record.step, record.epoch, record.loss)
        self.write(record)

    def summary(self, record: SummaryRecord) -> None:
        logger.info("%s finished: %d steps, final loss %s", record.stage.value, record.steps, record.final_loss)
        self.write(record)

    @property
    def written(self) -> int:
        return self._written

    def close(self) -> None:
        with self._lock:
            if self._file is not None:
                self._file.close()
                self._file = None

    def __enter__(self) -> "MetricsWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def read_metrics(path: PathLike) -> Iterator[BaseModel]:
    """Records of a metrics file, typed by their ``record_type``."""
    path = Path(path)
    if not path.exists():
        raise DataError("metrics file not found", path=str(path))
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as e:
                raise DataError(f"invalid JSON: {e.msg}", path=str(path), line=lineno) from e
            kind = data.get("record_type")
            if kind == RecordType.HISTORY.value:
                yield HistoryRecord.from_dict(data)
            elif kind == RecordType.SUMMARY.value:
                yield SummaryRecord.from_dict(data)
            else:
                logger.debug("%s:%d: skipping record type %r", path, lineno, kind)


def loss_curve(path: PathLike) -> List[float]:
    return [r.loss for r in read_metrics(path) if isinstance(r, HistoryRecord)]
