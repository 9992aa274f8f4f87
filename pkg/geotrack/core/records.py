"""Training and evaluation records.

`HistoryRecord` is one optimizer step, `SummaryRecord` closes a run. Both are
written as JSON lines by `geotrack.training.metrics.MetricsWriter`.
"""

from dataclasses import dataclass, field
from datetime import datetime
from typing import Any, Dict, Optional

from .base_models import BaseModel, RecordType, Stage


@dataclass
class HistoryRecord(BaseModel):
    """Metrics of one optimizer step."""

    step: int = 0
    epoch: int = 0
    stage: Stage = Stage.IMAGE
    loss: float = 0.0
    grad_norm: float = 0.0
    lr: float = 0.0
    extra: Dict[str, Any] = field(default_factory=dict)
    record_type: RecordType = RecordType.HISTORY

    def add_item(self, key: str, value: Any) -> None:
        """Attach an additional metric."""
        self.extra[key] = value


@dataclass
class SummaryRecord(BaseModel):
    """End-of-run summary."""

    stage: Stage = Stage.IMAGE
    steps: int = 0
    epochs: int = 0
    first_loss: Optional[float] = None
    final_loss: Optional[float] = None
    runtime_s: float = 0.0
    checkpoint: Optional[str] = None
    encoder_digest: Optional[str] = None
    start_time: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)
    record_type: RecordType = RecordType.SUMMARY

    def __post_init__(self):
        if self.start_time is None:
            self.start_time = datetime.now().isoformat(timespec="seconds")
