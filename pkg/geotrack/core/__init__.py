"""Numeric core: tensors with reverse-mode autodiff, primitives, optimizer and records."""

from .base_models import BaseModel, RecordType, Stage
from .gradcheck import GradcheckResult, gradcheck
from .module import Module, Parameter, parameter_norm
from .ops import (
    MASK_VALUE,
    AttentionParams,
    additive_mask,
    batch_norm,
    causal_mask,
    cross_entropy,
    gelu,
    l2_normalize,
    layer_norm,
    linear,
    log_softmax,
    multi_head_attention,
    relu,
    softmax,
)
from .optim import AdamState, adam_step, global_grad_norm
from .records import HistoryRecord, SummaryRecord
from .serialization import Checkpoint, load_checkpoint, save_checkpoint, weights_digest
from .tensor import (
    GradTape,
    OpCounter,
    Tensor,
    concat,
    count_ops,
    default_dtype,
    matmul,
    no_grad,
    precision,
    stack,
)

__all__ = [
    "AdamState",
    "AttentionParams",
    "BaseModel",
    "Checkpoint",
    "GradTape",
    "GradcheckResult",
    "HistoryRecord",
    "MASK_VALUE",
    "Module",
    "OpCounter",
    "Parameter",
    "RecordType",
    "Stage",
    "SummaryRecord",
    "Tensor",
    "adam_step",
    "additive_mask",
    "batch_norm",
    "causal_mask",
    "concat",
    "count_ops",
    "cross_entropy",
    "default_dtype",
    "gelu",
    "global_grad_norm",
    "gradcheck",
    "l2_normalize",
    "layer_norm",
    "linear",
    "load_checkpoint",
    "log_softmax",
    "matmul",
    "multi_head_attention",
    "no_grad",
    "parameter_norm",
    "precision",
    "relu",
    "save_checkpoint",
    "softmax",
    "stack",
    "weights_digest",
]
