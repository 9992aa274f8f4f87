"""Training stages.

- ``image``: both view encoders on (street frame, small aerial) pairs.
- ``adapter``: encoders frozen, GeoAdapters on (video, large aerial) pairs.
- ``baseline``: encoders fine-tuned on mean-pooled video / tile embeddings.
- ``retriever``: TransRetriever on labelled candidate sequences.

All stages share `EpochRunner`: seeded epoch shuffles, one Adam state,
JSON-lines metrics, periodic checkpoints and resume from the last saved
epoch.
"""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, model_validator

from geotrack.consistent.candidates import CandidateSequence, nearest_labels
from geotrack.consistent.methods import DEFAULT_LAMBDA, dp_choices
from geotrack.core.base_models import Stage
from geotrack.core.module import Module, Parameter, parameter_norm
from geotrack.core.optim import AdamState, adam_step, global_grad_norm
from geotrack.core.records import HistoryRecord, SummaryRecord
from geotrack.core.serialization import load_checkpoint, save_checkpoint
from geotrack.core.tensor import Tensor
from geotrack.errors import DataError, EmptyInputError, ProtocolError, UsageError
from geotrack.geo.dataset import DatasetManifest, ImageCache
from geotrack.models.adapter import AdapterConfig, AdapterState, UnifiedModel, pool_frames, tile_image
from geotrack.models.encoder import EncoderConfig, ViewEncoder, make_config
from geotrack.models.retriever import TransRetriever
from geotrack.utils.data_utils import make_rng, shuffled_batches, stopwatch_now

from . import checkpoints
from .loader import BatchLoader
from .losses import DEFAULT_ALPHA, batch_triplet_loss, plan_epoch
from .metrics import MetricsWriter

logger = logging.getLogger(__name__)

PathLike = Union[str, os.PathLike]

STAGES = tuple(s.value for s in Stage)
STAGE_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "image": {"epochs": 30, "batch": 16},
    "adapter": {"epochs": 30, "batch": 4},
    "baseline": {"epochs": 30, "batch": 4},
    "retriever": {"epochs": 500, "batch": 16},
}
STATE_FILE = "{stage}.state.ckpt"


class TrainSchedule(BaseModel):
    """Hyperparameters of one training stage."""

    stage: str = "image"
    epochs: int = Field(30, ge=0)
    batch: int = Field(16, ge=1)
    lr: float = Field(1e-4, gt=0)
    seed: int = 0
    alpha: float = Field(DEFAULT_ALPHA, ge=0)
    frame_stride: int = Field(1, ge=1)
    symmetric: bool = True
    lam: float = Field(DEFAULT_LAMBDA, ge=0)
    checkpoint_every: int = Field(1, ge=1)
    prefetch: int = Field(4, ge=1)

    @model_validator(mode="after")
    def _check_stage(self):
        if self.stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {self.stage!r}")
        if self.stage != "retriever" and self.batch < 2:
            raise ValueError("triplet stages need a batch of at least 2 pairs")
        return self

    @classmethod
    def for_stage(cls, stage: str, **overrides: Any) -> "TrainSchedule":
        """Stage defaults, overridden by any non-None keyword."""
        values: Dict[str, Any] = {"stage": stage, **STAGE_DEFAULTS.get(stage, {})}
        values.update({k: v for k, v in overrides.items() if v is not None})
        return make_config(cls, values)

    def to_header(self) -> Dict[str, str]:
        return {f"schedule.{k}": str(v) for k, v in self.model_dump().items()}


@dataclass
class StepResult:
    loss: float
    grad_norm: float


@dataclass
class TrainOutcome:
    """Summary of a finished stage and the checkpoints it wrote."""

    summary: SummaryRecord
    checkpoints: Dict[str, str] = field(default_factory=dict)
    losses: List[float] = field(default_factory=list)


def trainable_parameters(modules: Mapping[str, Module]) -> Dict[str, Parameter]:
    return {
        f"{prefix}.{name}": p
        for prefix, module in modules.items()
        for name, p in module.named_parameters()
        if p.requires_grad
    }


def optimize(loss: Tensor, modules: Mapping[str, Module], state: AdamState) -> StepResult:
    """Backpropagate ``loss`` and apply one Adam update to the trainable parameters."""
    for module in modules.values():
        module.zero_grad()
    loss.backward()
    params = trainable_parameters(modules)
    norm = global_grad_norm(params)
    adam_step(params, state)
    return StepResult(loss=float(loss.item()), grad_norm=norm)


# ---------------------------------------------------------------------------- steps


def stage1_step(
    street: ViewEncoder,
    aerial: ViewEncoder,
    frames: np.ndarray,
    tiles: np.ndarray,
    state: AdamState,
    alpha: float = DEFAULT_ALPHA,
    symmetric: bool = True,
) -> StepResult:
    """One update of both encoders on matched (street frame, small aerial) rows."""
    if len(frames) < 2 or len(frames) != len(tiles):
        raise UsageError(f"stage 1 needs at least 2 matched pairs, got {len(frames)} frames and {len(tiles)} tiles")
    loss = batch_triplet_loss(street(frames), aerial(tiles), alpha, symmetric)
    return optimize(loss, {"street": street, "aerial": aerial}, state)


def check_frozen(*models: UnifiedModel) -> None:
    for model in models:
        if not model.encoder.frozen:
            raise ProtocolError(f"adapter training requires a frozen {model.view or 'view'} encoder")


def video_embeddings(street: UnifiedModel, aerial: UnifiedModel, videos: np.ndarray, larges: np.ndarray):
    """Adapted embeddings of videos ``[B, T, H, W, 3]`` and tiled large aerials ``[B, k*k, h, w, 3]``."""
    return street(videos), aerial(larges)


def baseline_embeddings(street: ViewEncoder, aerial: ViewEncoder, videos: np.ndarray, larges: np.ndarray):
    """Mean-pooled plain-encoder embeddings of the same inputs."""
    return pool_frames(street(videos)), pool_frames(aerial(larges))


def stage2_step(
    street: UnifiedModel,
    aerial: UnifiedModel,
    videos: np.ndarray,
    larges: np.ndarray,
    state: AdamState,
    alpha: float = DEFAULT_ALPHA,
    symmetric: bool = True,
) -> StepResult:
    """One update of the GeoAdapters; the encoders must be frozen.

    Raises:
        ProtocolError: An encoder still has trainable parameters.
        UsageError: Fewer than 2 (video, large aerial) pairs.
    """
    check_frozen(street, aerial)
    if len(videos) < 2 or len(videos) != len(larges):
        raise UsageError(f"stage 2 needs at least 2 matched pairs, got {len(videos)} videos and {len(larges)} aerials")
    loss = batch_triplet_loss(*video_embeddings(street, aerial, videos, larges), alpha, symmetric)
    return optimize(loss, {"street": street.state, "aerial": aerial.state}, state)


def baseline_step(
    street: ViewEncoder,
    aerial: ViewEncoder,
    videos: np.ndarray,
    larges: np.ndarray,
    state: AdamState,
    alpha: float = DEFAULT_ALPHA,
    symmetric: bool = True,
) -> StepResult:
    """One update of the plain encoders with the video loss on pooled embeddings."""
    if len(videos) < 2 or len(videos) != len(larges):
        raise UsageError(f"baseline training needs at least 2 matched pairs, got {len(videos)}")
    loss = batch_triplet_loss(*baseline_embeddings(street, aerial, videos, larges), alpha, symmetric)
    return optimize(loss, {"street": street, "aerial": aerial}, state)


# ----------------------------------------------------------------------------- data


@dataclass
class PairSet:
    """Matched training items: street image paths, one aerial path and its id per pair."""

    street: List[List[str]]
    aerial: List[str]
    groups: List[str]

    def __len__(self) -> int:
        return len(self.aerial)


def image_pairs(manifest: DatasetManifest, split: str = "train", stride: int = 1) -> PairSet:
    small = manifest.small_by_id()
    pairs = PairSet([], [], [])
    for video in manifest.split(split):
        for frame, tile in list(zip(video.frames, video.small_tiles))[::stride]:
            pairs.street.append([frame])
            pairs.aerial.append(small[tile].path)
            pairs.groups.append(tile)
    return pairs


def video_pairs(manifest: DatasetManifest, split: str = "train", stride: int = 1) -> PairSet:
    large = manifest.large_by_id()
    pairs = PairSet([], [], [])
    for video in manifest.split(split):
        pairs.street.append(list(video.frames[::stride]))
        pairs.aerial.append(large[video.large_tile].path)
        pairs.groups.append(video.large_tile)
    return pairs


def load_image_batch(pairs: PairSet, images: ImageCache, indices: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    frames = np.stack([images(pairs.street[i][0]) for i in indices])
    tiles = np.stack([images(pairs.aerial[i]) for i in indices])
    return frames, tiles


def load_video_batch(
    pairs: PairSet, images: ImageCache, indices: np.ndarray, tile: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Videos cut to the shortest in the batch, large aerials split into their tiles."""
    length = min(len(pairs.street[i]) for i in indices)
    videos = np.stack([np.stack([images(f) for f in pairs.street[i][:length]]) for i in indices])
    larges = np.stack([tile_image(images(pairs.aerial[i]), tile) for i in indices])
    return videos, larges


# ---------------------------------------------------------------------------- runner


class EpochRunner:
    """Epoch loop with metrics, checkpoints and resume for one stage."""

    def __init__(
        self,
        schedule: TrainSchedule,
        modules: Mapping[str, Module],
        out_dir: Optional[PathLike] = None,
        writer: Optional[MetricsWriter] = None,
        save_models: Optional[Callable[[], Dict[str, str]]] = None,
    ) -> None:
        self.schedule = schedule
        self.modules = dict(modules)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.writer = writer or MetricsWriter(None)
        self.save_models = save_models
        self.state = AdamState(lr=schedule.lr)
        self.epoch = 0
        self.step = 0
        self.losses: List[float] = []
        self.saved: Dict[str, str] = {}

    @property
    def stage(self) -> Stage:
        return Stage(self.schedule.stage)

    @property
    def state_path(self) -> Optional[Path]:
        if self.out_dir is None:
            return None
        return self.out_dir / STATE_FILE.format(stage=self.schedule.stage)

    def save_state(self) -> None:
        if self.state_path is None:
            return
        arrays = {f"{prefix}.{k}": v for prefix, m in self.modules.items() for k, v in m.state_dict().items()}
        arrays.update(self.state.state_dict())
        header = {
            **self.schedule.to_header(),
            "kind": "trainer",
            "trainer.epoch": self.epoch,
            "trainer.step": self.step,
            "trainer.adam_step": self.state.step,
        }
        save_checkpoint(self.state_path, arrays, header)

    def restore(self) -> bool:
        """Resume from the saved state of this stage; False when there is none."""
        path = self.state_path
        if path is None or not path.exists():
            logger.warning("no saved %s state to resume from, starting fresh", self.schedule.stage)
            return False
        ckpt = load_checkpoint(path)
        if ckpt.config.get("kind") != "trainer" or ckpt.config.get("schedule.stage") != self.schedule.stage:
            raise DataError("checkpoint does not hold the state of this stage", path=str(path))
        adam = {k: v for k, v in ckpt.arrays.items() if k.startswith("adam.")}
        for prefix, module in self.modules.items():
            head = f"{prefix}."
            module.load_state_dict({k[len(head) :]: v for k, v in ckpt.arrays.items() if k.startswith(head)})
        self.state.load_state_dict(adam, int(ckpt.config["trainer.adam_step"]))
        self.epoch = int(ckpt.config["trainer.epoch"])
        self.step = int(ckpt.config["trainer.step"])
        logger.info("resumed %s at epoch %d (step %d)", self.schedule.stage, self.epoch, self.step)
        return True

    def checkpoint(self) -> None:
        if self.save_models is not None:
            self.saved.update(self.save_models())
        self.save_state()

    def run(
        self,
        plan: Callable[[np.random.Generator], Sequence[Any]],
        load: Callable[[Any], Any],
        step: Callable[[Any, AdamState], StepResult],
    ) -> TrainOutcome:
        """Train until ``schedule.epochs``.

        ``plan`` turns the epoch's generator into batch descriptors, ``load``
        materialises one descriptor (in a background thread) and ``step``
        performs the update.
        """
        start = stopwatch_now()
        stream = STAGES.index(self.schedule.stage)
        first_epoch = self.epoch
        for epoch in range(first_epoch, self.schedule.epochs):
            batches = plan(make_rng(self.schedule.seed, stream, epoch))
            if not batches:
                raise EmptyInputError(f"{self.schedule.stage} training has no batches to run")
            epoch_losses = []
            for batch in BatchLoader(batches, load, maxsize=self.schedule.prefetch):
                result = step(batch, self.state)
                self.step += 1
                epoch_losses.append(result.loss)
                self.losses.append(result.loss)
                self.writer.history(
                    HistoryRecord(
                        step=self.step,
                        epoch=epoch,
                        stage=self.stage,
                        loss=result.loss,
                        grad_norm=result.grad_norm,
                        lr=self.state.lr,
                    )
                )
            self.epoch = epoch + 1
            logger.info("%s epoch %d: mean loss %.5f", self.schedule.stage, epoch, float(np.mean(epoch_losses)))
            if self.epoch % self.schedule.checkpoint_every == 0 or self.epoch == self.schedule.epochs:
                self.checkpoint()
        if self.epoch == first_epoch:
            self.checkpoint()
        summary = SummaryRecord(
            stage=self.stage,
            steps=self.step,
            epochs=self.epoch,
            first_loss=self.losses[0] if self.losses else None,
            final_loss=self.losses[-1] if self.losses else None,
            runtime_s=stopwatch_now() - start,
            checkpoint=str(self.out_dir) if self.out_dir is not None and self.saved else None,
        )
        return TrainOutcome(summary=summary, checkpoints=dict(self.saved), losses=list(self.losses))


def _finish(outcome: TrainOutcome, writer: MetricsWriter) -> TrainOutcome:
    writer.summary(outcome.summary)
    return outcome


# ---------------------------------------------------------------------------- stages


def train_image_stage(
    manifest: DatasetManifest,
    images: ImageCache,
    schedule: TrainSchedule,
    out_dir: PathLike,
    config: Optional[EncoderConfig] = None,
    resume: bool = False,
    writer: Optional[MetricsWriter] = None,
) -> TrainOutcome:
    """Stage 1: train both encoders from scratch on frame / small-tile pairs."""
    config = config or EncoderConfig()
    writer = writer or MetricsWriter(None)
    street = ViewEncoder(config, seed=schedule.seed, view="street")
    aerial = ViewEncoder(config, seed=schedule.seed + 1, view="aerial")
    pairs = image_pairs(manifest, stride=schedule.frame_stride)
    if len(pairs) < 2:
        raise EmptyInputError("stage 1 needs at least two training frames")

    def save() -> Dict[str, str]:
        return {view: str(checkpoints.save_model(checkpoints.encoder_path(out_dir, view), enc))
                for view, enc in (("street", street), ("aerial", aerial))}

    runner = EpochRunner(schedule, {"street": street, "aerial": aerial}, out_dir, writer, save)
    if resume:
        runner.restore()
    outcome = runner.run(
        lambda rng: plan_epoch(pairs.groups, schedule.batch, rng),
        lambda plan: load_image_batch(pairs, images, plan.indices),
        lambda batch, state: stage1_step(street, aerial, *batch, state, schedule.alpha, schedule.symmetric),
    )
    return _finish(outcome, writer)


def _frozen_pair(out_dir: PathLike, adapter: Optional[AdapterConfig], seed: int) -> Tuple[UnifiedModel, UnifiedModel]:
    models = []
    for offset, view in enumerate(checkpoints.VIEWS):
        encoder = checkpoints.load_encoder(checkpoints.encoder_path(out_dir, view)).freeze()
        models.append(UnifiedModel(encoder, AdapterState(encoder, adapter, seed=seed + offset)))
    return models[0], models[1]


def train_adapter_stage(
    manifest: DatasetManifest,
    images: ImageCache,
    schedule: TrainSchedule,
    out_dir: PathLike,
    config: Optional[AdapterConfig] = None,
    resume: bool = False,
    writer: Optional[MetricsWriter] = None,
) -> TrainOutcome:
    """Stage 2: freeze the stage-1 encoders in ``out_dir`` and train the GeoAdapters.

    Raises:
        ProtocolError: The encoder weights changed during the stage.
    """
    writer = writer or MetricsWriter(None)
    street, aerial = _frozen_pair(out_dir, config, schedule.seed)
    check_frozen(street, aerial)
    before = checkpoints.encoder_digest(street.encoder, aerial.encoder)
    pairs = video_pairs(manifest, stride=schedule.frame_stride)
    tile = aerial.encoder.config.image_size

    def save() -> Dict[str, str]:
        return {f"{m.view}_adapter": str(checkpoints.save_model(checkpoints.adapter_path(out_dir, m.view), m.state))
                for m in (street, aerial)}

    runner = EpochRunner(schedule, {"street": street.state, "aerial": aerial.state}, out_dir, writer, save)
    if resume:
        runner.restore()
    outcome = runner.run(
        lambda rng: plan_epoch(pairs.groups, schedule.batch, rng),
        lambda plan: load_video_batch(pairs, images, plan.indices, tile),
        lambda batch, state: stage2_step(street, aerial, *batch, state, schedule.alpha, schedule.symmetric),
    )
    after = checkpoints.encoder_digest(street.encoder, aerial.encoder)
    if after != before:
        raise ProtocolError("encoder weights changed while training the adapters")
    outcome.summary.encoder_digest = after
    outcome.summary.extra["adapter_norm"] = float(np.hypot(parameter_norm(street.state), parameter_norm(aerial.state)))
    return _finish(outcome, writer)


def train_baseline_stage(
    manifest: DatasetManifest,
    images: ImageCache,
    schedule: TrainSchedule,
    out_dir: PathLike,
    resume: bool = False,
    writer: Optional[MetricsWriter] = None,
) -> TrainOutcome:
    """Fine-tune copies of the stage-1 encoders on mean-pooled video / large-aerial embeddings."""
    writer = writer or MetricsWriter(None)
    street = checkpoints.load_encoder(checkpoints.encoder_path(out_dir, "street"))
    aerial = checkpoints.load_encoder(checkpoints.encoder_path(out_dir, "aerial"))
    pairs = video_pairs(manifest, stride=schedule.frame_stride)
    tile = aerial.config.image_size

    def save() -> Dict[str, str]:
        return {f"{enc.view}_baseline": str(checkpoints.save_model(checkpoints.baseline_path(out_dir, enc.view), enc))
                for enc in (street, aerial)}

    runner = EpochRunner(schedule, {"street": street, "aerial": aerial}, out_dir, writer, save)
    if resume:
        runner.restore()
    outcome = runner.run(
        lambda rng: plan_epoch(pairs.groups, schedule.batch, rng),
        lambda plan: load_video_batch(pairs, images, plan.indices, tile),
        lambda batch, state: baseline_step(street, aerial, *batch, state, schedule.alpha, schedule.symmetric),
    )
    return _finish(outcome, writer)


# ------------------------------------------------------------------------- retriever


def retriever_labels(seq: CandidateSequence, lam: float = DEFAULT_LAMBDA) -> List[int]:
    """Given labels, else the candidate nearest the ground truth, else the DP optimum."""
    if seq.labels is not None:
        return list(seq.labels)
    if seq.truth is not None:
        return nearest_labels(seq)
    return dp_choices(seq, lam)


def retriever_batches(
    sequences: Sequence[CandidateSequence], batch: int, rng: np.random.Generator
) -> List[List[int]]:
    """Shuffled batches of sequence indices; one batch only holds one (n, t) shape."""
    by_shape: Dict[Tuple[int, int], List[int]] = {}
    for i, seq in enumerate(sequences):
        by_shape.setdefault((seq.n, seq.t), []).append(i)
    batches: List[List[int]] = []
    for shape in sorted(by_shape):
        members = np.asarray(by_shape[shape])
        for idx in shuffled_batches(len(members), batch, rng, drop_last=False):
            batches.append(members[idx].tolist())
    order = rng.permutation(len(batches))
    return [batches[i] for i in order]


def retriever_step(model: TransRetriever, tokens: np.ndarray, labels: np.ndarray, state: AdamState) -> StepResult:
    """One teacher-forced cross-entropy update."""
    model.train()
    return optimize(model.loss(tokens, labels), {"retriever": model}, state)


def train_retriever(
    model: TransRetriever,
    sequences: Sequence[CandidateSequence],
    schedule: Optional[TrainSchedule] = None,
    out_dir: Optional[PathLike] = None,
    resume: bool = False,
    writer: Optional[MetricsWriter] = None,
    require_labels: bool = False,
) -> TrainOutcome:
    """Train ``model`` in place on candidate sequences.

    Raises:
        EmptyInputError: No sequences.
        UsageError: ``require_labels`` is set and a sequence has no labels.
    """
    schedule = schedule or TrainSchedule.for_stage("retriever")
    writer = writer or MetricsWriter(None)
    if not sequences:
        raise EmptyInputError("no candidate sequences to train the retriever on")
    if require_labels:
        missing = [s.video_id for s in sequences if s.labels is None]
        if missing:
            raise UsageError(f"{len(missing)} sequences have no labels, first: {missing[0]!r}")
    tokens = [s.tokens() for s in sequences]
    labels = [np.asarray(retriever_labels(s, schedule.lam), dtype=np.int64) for s in sequences]

    def save() -> Dict[str, str]:
        if out_dir is None:
            return {}
        return {"retriever": str(checkpoints.save_model(checkpoints.retriever_path(out_dir), model))}

    def load(members: List[int]) -> Tuple[np.ndarray, np.ndarray]:
        return np.stack([tokens[i] for i in members]), np.stack([labels[i] for i in members])

    runner = EpochRunner(schedule, {"retriever": model}, out_dir, writer, save)
    if resume:
        runner.restore()
    outcome = runner.run(
        lambda rng: retriever_batches(sequences, schedule.batch, rng),
        load,
        lambda batch, state: retriever_step(model, *batch, state),
    )
    model.eval()
    return _finish(outcome, writer)
