"""Two-stage contrastive training, baseline fine-tuning and retriever training."""

from .checkpoints import load_encoder, load_retriever, load_unified, save_model
from .loader import BatchLoader
from .losses import DEFAULT_ALPHA, TripletBatchPlan, batch_triplet_loss, plan_epoch, soft_margin_triplet
from .metrics import MetricsWriter, loss_curve, read_metrics
from .trainer import (
    STAGES,
    EpochRunner,
    StepResult,
    TrainOutcome,
    TrainSchedule,
    baseline_step,
    stage1_step,
    stage2_step,
    train_adapter_stage,
    train_baseline_stage,
    train_image_stage,
    train_retriever,
)

__all__ = [
    "BatchLoader",
    "DEFAULT_ALPHA",
    "EpochRunner",
    "MetricsWriter",
    "STAGES",
    "StepResult",
    "TrainOutcome",
    "TrainSchedule",
    "TripletBatchPlan",
    "baseline_step",
    "batch_triplet_loss",
    "load_encoder",
    "load_retriever",
    "load_unified",
    "loss_curve",
    "plan_epoch",
    "read_metrics",
    "save_model",
    "soft_margin_triplet",
    "stage1_step",
    "stage2_step",
    "train_adapter_stage",
    "train_baseline_stage",
    "train_image_stage",
    "train_retriever",
]
