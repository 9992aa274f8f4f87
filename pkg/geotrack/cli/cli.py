import getpass
import json
import logging
import os
import sys
import tempfile
import traceback
from functools import wraps
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import click
import numpy as np
import psutil
from click.exceptions import ClickException

import geotrack
from geotrack import env
from geotrack.config_manager import ConfigManager, RunConfig, resolve
from geotrack.consistent.benchmark import compare_methods, noisy_benchmark, tune_lambda
from geotrack.consistent.candidates import (
    TrajectoryPrediction,
    load_candidates,
    load_predictions,
    save_candidates,
    save_predictions,
)
from geotrack.consistent.methods import DEFAULT_LAMBDA, DEFAULT_SIGMA_M, METHODS, run_method
from geotrack.core.tensor import count_ops
from geotrack.errors import Error, UsageError
from geotrack.errors.term import termlog, termsetup, termwarn
from geotrack.errors.util import ErrorHandler
from geotrack.geo.dataset import MANIFEST_NAME, DatasetManifest, ImageCache, ingest
from geotrack.geo.export import export_trajectory
from geotrack.geo.geodesy import MILES_THRESHOLD_M
from geotrack.geo.synthetic import SceneSpec, generate_scene
from geotrack.models.encoder import ViewEncoder, encode_batch, make_config
from geotrack.models.retriever import TransRetriever
from geotrack.plot.svg import plot_trajectories
from geotrack.retrieval.gallery import RetrievalResult, load_gallery, save_gallery
from geotrack.retrieval.metrics import recall, recall_sweep
from geotrack.retrieval.pipeline import (
    frame_rankings,
    frame_to_frame,
    large_gallery,
    load_results,
    make_small_gallery,
    resolve_top_t,
    save_results,
    seq_to_image,
    small_gallery,
    video_frames,
)
from geotrack.training import checkpoints
from geotrack.training.metrics import MetricsWriter
from geotrack.training.trainer import (
    STAGES,
    TrainSchedule,
    train_adapter_stage,
    train_baseline_stage,
    train_image_stage,
    train_retriever,
)
from geotrack.utils.data_utils import make_rng, stopwatch_now
from geotrack.utils.json_serialization import json_dumps_safer

SMALL_GALLERY = "small.gallery"
LARGE_GALLERY = "large.gallery"
SEQ_RESULTS = "seq_results.json"
CANDIDATES = "candidates.json"
PREDICTIONS = "predictions.{method}.json"

# Send cli logs to <geotrack dir>/debug-cli.<username>.log by default and fallback to a temp dir.
try:
    _geotrack_dir = env.get_dir()
    _geotrack_dir.mkdir(parents=True, exist_ok=True)
except OSError:
    _geotrack_dir = Path(tempfile.gettempdir()) / "geotrack"
    _geotrack_dir.mkdir(parents=True, exist_ok=True)

try:
    _username = getpass.getuser()
except KeyError:
    # chroot jails or docker containers. Return user id in these cases.
    _username = str(os.getuid())

_geotrack_log_path = _geotrack_dir / f"debug-cli.{_username}.log"

logging.basicConfig(
    filename=str(_geotrack_log_path),
    level=logging.DEBUG if env.is_debug() else logging.INFO,
    format="%(asctime)s %(levelname)s %(message)s",
    datefmt="%Y-%m-%d %H:%M:%S",
)
logger = logging.getLogger("geotrack")
termsetup(env.is_silent(), logger)


class ClickGeotrackException(ClickException):
    orig_type: type = Error

    def format_message(self):
        orig_type = f"{self.orig_type.__module__}.{self.orig_type.__name__}"
        if issubclass(self.orig_type, Error):
            return click.style(str(self.message), fg="red")
        return f"An Exception was raised, see {_geotrack_log_path} for full traceback.\n{orig_type}: {self.message}"


def display_error(func):
    """Function decorator turning geotrack errors into click errors.

    Usage errors exit with status 2, every other `Error` with status 1.
    """

    @wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except Error as e:
            exc_type, exc_value, exc_traceback = sys.exc_info()
            lines = traceback.format_exception(exc_type, exc_value, exc_traceback)
            logger.error("".join(lines))
            logger.error(json.dumps(ErrorHandler.from_exception(e).to_dict()))
            if isinstance(e, UsageError):
                raise click.UsageError(str(e)) from e
            click_exc = ClickGeotrackException(str(e))
            click_exc.orig_type = exc_type
            raise click_exc.with_traceback(sys.exc_info()[2])

    return wrapper


def _emit(payload: Mapping[str, Any]) -> None:
    """Machine-readable result on stdout."""
    click.echo(json_dumps_safer(payload, indent=2, sort_keys=True))


def _run_config(
    subcommand: str,
    config_file: Optional[str],
    flags: Mapping[str, Any],
    defaults: Optional[Mapping[str, Any]] = None,
) -> Tuple[RunConfig, ConfigManager]:
    path = config_file or env.get_config()
    manager = ConfigManager(path) if path else ConfigManager()
    settings = resolve({"seed": env.get_seed(0), **(defaults or {})}, manager.settings, flags)
    run = RunConfig.build(subcommand, settings)
    logger.info("%s config: %s", subcommand, run.model_dump_json())
    return run, manager


def _load_dataset(path: Optional[str]) -> Tuple[DatasetManifest, ImageCache]:
    if not path:
        raise UsageError("--data is required")
    manifest, report = ingest(path)
    for warning in report.warnings[:5]:
        termwarn(warning, repeat=False)
    root = Path(path) if Path(path).is_dir() else Path(path).parent
    return manifest, ImageCache(root)


def _videos(manifest: DatasetManifest, split: str) -> list:
    videos = manifest.videos if split == "all" else manifest.split(split)
    if not videos:
        raise UsageError(f"dataset has no videos in split {split!r}")
    return videos


def _adapter_file(directory: str, view: str) -> Optional[Path]:
    path = checkpoints.adapter_path(directory, view)
    if path.exists():
        return path
    termwarn(f"no {view} adapter checkpoint in {directory}, using identity adapters", repeat=False)
    return None


def _top_t(value: str) -> Any:
    return int(value) if value.isdigit() else value


class RunGroup(click.Group):
    @display_error
    def get_command(self, ctx, cmd_name):
        rv = click.Group.get_command(self, ctx, cmd_name)
        if rv is not None:
            return rv
        return None


@click.command(cls=RunGroup, invoke_without_command=True)
@click.version_option(version=geotrack.__version__)
@click.pass_context
def cli(ctx):
    if ctx.invoked_subcommand is None:
        click.echo(ctx.get_help())


config_option = click.option(
    "--config",
    "config_file",
    type=click.Path(dir_okay=False),
    envvar=env.CONFIG,
    help="key=value settings file; flags override it.",
)
seed_option = click.option("--seed", type=int, default=None, help="Seed for deterministic replay.")


@cli.command("gen", help="Generate a synthetic dataset")
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False), help="Dataset directory.")
@click.option("--videos", type=int, default=None, help="Number of videos.")
@click.option("--frames", type=int, default=None, help="Frames per video.")
@seed_option
@config_option
@display_error
def gen(out, videos, frames, seed, config_file):
    run, _ = _run_config("gen", config_file, {"seed": seed, "out": out, "scene.videos": videos, "scene.frames": frames})
    spec = make_config(SceneSpec, run.scene)
    manifest = generate_scene(spec, out, seed=run.seed)
    termlog(f"generated {len(manifest.videos)} videos in {out}")
    _emit(
        {
            "manifest": str(Path(out) / MANIFEST_NAME),
            "seed": run.seed,
            "videos": len(manifest.videos),
            "small_tiles": len(manifest.small_tiles),
            "large_tiles": len(manifest.large_tiles),
            "utm_zone": manifest.utm_zone,
        }
    )


@cli.command("train", help="Train one stage")
@click.option("--stage", type=click.Choice(STAGES), default="image", show_default=True)
@click.option("--data", type=click.Path(exists=True), help="Dataset directory or manifest.")
@click.option("--out", "-o", required=True, type=click.Path(file_okay=False), help="Checkpoint directory.")
@click.option("--candidates", "candidates_file", type=click.Path(dir_okay=False), help="Candidate sequences (retriever stage).")
@click.option("--epochs", type=int, default=None)
@click.option("--batch", type=int, default=None)
@click.option("--lr", type=float, default=None)
@click.option("--alpha", type=float, default=None, help="Soft-margin triplet scale.")
@click.option("--frame-stride", type=int, default=None, help="Keep every k-th frame.")
@click.option("--variant", type=click.Choice(["cls", "all", "asym"]), default=None, help="GeoAdapter attention variant.")
@click.option("--metrics", type=click.Path(dir_okay=False), default=None, help="JSON-lines metrics file.")
@click.option("--resume", is_flag=True, default=False, help="Continue from the last saved epoch.")
@seed_option
@config_option
@display_error
def train(stage, data, out, candidates_file, epochs, batch, lr, alpha, frame_stride, variant, metrics, resume, seed, config_file):
    run, manager = _run_config("train", config_file, {"seed": seed, "dataset": data, "checkpoints": out, "adapter.variant": variant})
    overrides = resolve(
        {},
        manager.section("schedule"),
        {"epochs": epochs, "batch": batch, "lr": lr, "alpha": alpha, "frame_stride": frame_stride, "seed": run.seed},
    )
    overrides.pop("stage", None)
    schedule = TrainSchedule.for_stage(stage, **overrides)
    metrics_path = Path(metrics) if metrics else Path(out) / f"{stage}.metrics.jsonl"
    with MetricsWriter(metrics_path, append=resume) as writer:
        if stage == "retriever":
            if not candidates_file:
                raise UsageError("the retriever stage needs --candidates")
            sequences = load_candidates(candidates_file)
            existing = checkpoints.retriever_path(out)
            if resume and existing.exists():
                model = checkpoints.load_retriever(existing)
            else:
                model = TransRetriever(run.retriever, seed=schedule.seed)
            outcome = train_retriever(model, sequences, schedule, out, resume=resume, writer=writer)
        else:
            manifest, images = _load_dataset(data)
            if stage == "image":
                outcome = train_image_stage(manifest, images, schedule, out, run.encoder, resume, writer)
            elif stage == "adapter":
                outcome = train_adapter_stage(manifest, images, schedule, out, run.adapter, resume, writer)
            else:
                outcome = train_baseline_stage(manifest, images, schedule, out, resume, writer)
    termlog(f"{stage} stage finished after {outcome.summary.epochs} epochs")
    _emit({"summary": outcome.summary.to_dict(), "checkpoints": outcome.checkpoints, "metrics": str(metrics_path)})


@cli.command("build-gallery", help="Embed the small and large aerial tiles")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--checkpoints", "ckpt_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "-o", type=click.Path(file_okay=False), default=None, help="Gallery directory, defaults to --checkpoints.")
@seed_option
@config_option
@display_error
def build_gallery(data, ckpt_dir, out, seed, config_file):
    run, _ = _run_config("build-gallery", config_file, {"seed": seed, "dataset": data, "checkpoints": ckpt_dir, "galleries": out})
    out_dir = Path(run.galleries or ckpt_dir)
    manifest, images = _load_dataset(data)
    aerial = checkpoints.load_encoder(checkpoints.encoder_path(ckpt_dir, "aerial"))
    small = small_gallery(aerial, manifest, images)
    unified = checkpoints.load_unified(checkpoints.encoder_path(ckpt_dir, "aerial"), _adapter_file(ckpt_dir, "aerial"))
    large = large_gallery(unified, manifest, images)
    small_path = save_gallery(out_dir / SMALL_GALLERY, small)
    large_path = save_gallery(out_dir / LARGE_GALLERY, large)
    _emit({"small": str(small_path), "small_size": len(small), "large": str(large_path), "large_size": len(large), "dim": small.dim})


@cli.command("infer-seq", help="Match whole videos to large aerial tiles")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--checkpoints", "ckpt_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--galleries", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--split", type=click.Choice(["train", "val", "test", "all"]), default="val", show_default=True)
@click.option("--top-t", default=None, help="Large tiles kept per video: an integer, 1% or all (default all).")
@click.option("--frame-stride", type=int, default=1, show_default=True)
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None)
@seed_option
@config_option
@display_error
def infer_seq(data, ckpt_dir, galleries, split, top_t, frame_stride, out, seed, config_file):
    run, _ = _run_config(
        "infer-seq",
        config_file,
        {"seed": seed, "checkpoints": ckpt_dir, "galleries": galleries, "top_t": top_t},
        {"top_t": "all"},
    )
    gallery_dir = Path(run.galleries or ckpt_dir)
    manifest, images = _load_dataset(data)
    large_index = load_gallery(gallery_dir / LARGE_GALLERY)
    street = checkpoints.load_unified(checkpoints.encoder_path(ckpt_dir, "street"), _adapter_file(ckpt_dir, "street"))
    keep = resolve_top_t(_top_t(run.top_t), len(large_index))
    videos = _videos(manifest, split)
    results = []
    for video in videos:
        frames = video_frames(video, images)
        results.append(seq_to_image(street, frames, large_index, len(large_index), query_id=video.id, stride=frame_stride))
    report = recall(results, [v.large_tile for v in videos], mode="id", gallery_size=len(large_index))
    trimmed = [RetrievalResult(r.query_id, r.ids[:keep], r.scores[:keep]) for r in results]
    out_path = save_results(Path(out) if out else gallery_dir / SEQ_RESULTS, trimmed)
    _emit({"results": str(out_path), "queries": len(results), "top_t": keep, "recall": report.to_dict()})


@cli.command("infer-frames", help="Per-frame candidates from the children of the top large tiles")
@click.option("--data", required=True, type=click.Path(exists=True))
@click.option("--checkpoints", "ckpt_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--galleries", type=click.Path(exists=True, file_okay=False), default=None)
@click.option("--seq-results", type=click.Path(dir_okay=False), default=None, help="Output of infer-seq.")
@click.option("--top-t-large", default=None, help="Large tiles feeding the small gallery: an integer, 1% or all.")
@click.option("--candidates", "t_candidates", type=int, default=None, help="Candidates per frame (t).")
@click.option("--frame-stride", type=int, default=1, show_default=True)
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None)
@seed_option
@config_option
@display_error
def infer_frames(data, ckpt_dir, galleries, seq_results, top_t_large, t_candidates, frame_stride, out, seed, config_file):
    run, _ = _run_config(
        "infer-frames",
        config_file,
        {"seed": seed, "checkpoints": ckpt_dir, "galleries": galleries, "top_t": top_t_large, "candidates": t_candidates},
    )
    gallery_dir = Path(run.galleries or ckpt_dir)
    manifest, images = _load_dataset(data)
    large_index = load_gallery(gallery_dir / LARGE_GALLERY)
    small_index = load_gallery(gallery_dir / SMALL_GALLERY)
    street = checkpoints.load_encoder(checkpoints.encoder_path(ckpt_dir, "street"))
    videos = {v.id: v for v in manifest.videos}
    sequences, rankings, truths, sizes = [], [], [], []
    for result in load_results(Path(seq_results) if seq_results else gallery_dir / SEQ_RESULTS):
        video = videos.get(result.query_id)
        if video is None:
            termwarn(f"video {result.query_id!r} is not in the dataset, skipped")
            continue
        gallery = make_small_gallery(result, large_index, small_index, _top_t(run.top_t))
        truth = [tuple(p) for p in video.gps[::frame_stride]]
        seq = frame_to_frame(
            street,
            video_frames(video, images, frame_stride),
            gallery,
            run.candidates,
            frame_ids=video.frames[::frame_stride],
            truth=truth,
            video_id=video.id,
        )
        sequences.append(seq)
        rankings.extend(frame_rankings(seq))
        truths.extend(truth)
        sizes.append(len(gallery))
    if not sequences:
        raise UsageError("no retrieval results matched the dataset videos")
    mean_size = float(np.mean(sizes))
    report = recall(rankings, truths, mode="distance", gallery_size=int(round(mean_size)))
    out_path = save_candidates(Path(out) if out else gallery_dir / CANDIDATES, sequences)
    _emit({"candidates": str(out_path), "sequences": len(sequences), "t": run.candidates, "mean_gallery_size": mean_size, "recall": report.to_dict()})


@cli.command("retrieve", help="Pick one candidate per frame")
@click.option("--candidates", "candidates_file", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--method", type=click.Choice(METHODS), default=None, help="Defaults to dp.")
@click.option("--lambda", "lam", type=float, default=None, help=f"Similarity weight in meters (default {DEFAULT_LAMBDA:g}).")
@click.option("--tune-lambda", "tune", is_flag=True, default=False, help="Pick lambda on the labelled sequences first.")
@click.option("--sigma", type=float, default=DEFAULT_SIGMA_M, show_default=True, help="Dominant-set affinity scale in meters.")
@click.option("--checkpoints", "ckpt_dir", type=click.Path(file_okay=False), default=None, help="Holds retriever.ckpt.")
@click.option("--out", "-o", type=click.Path(dir_okay=False), default=None)
@click.option("--geojson", type=click.Path(file_okay=False), default=None, help="Directory for per-video GeoJSON.")
@seed_option
@config_option
@display_error
def retrieve(candidates_file, method, lam, tune, sigma, ckpt_dir, out, geojson, seed, config_file):
    run, _ = _run_config("retrieve", config_file, {"seed": seed, "method": method, "lam": lam, "checkpoints": ckpt_dir})
    sequences = load_candidates(candidates_file)
    if not sequences:
        raise UsageError(f"{candidates_file} holds no candidate sequences")
    lam = run.lam
    if tune:
        lam, _ = tune_lambda(sequences)
    model = checkpoints.load_retriever(checkpoints.retriever_path(run.checkpoints)) if run.method == "transretriever" else None
    predictions = [run_method(run.method, seq, lam=lam, sigma=sigma, model=model) for seq in sequences]
    out_path = Path(out) if out else Path(candidates_file).with_name(PREDICTIONS.format(method=run.method))
    save_predictions(out_path, predictions)
    if geojson:
        for pred in predictions:
            export_trajectory(pred, Path(geojson) / f"{pred.video_id or 'video'}.{pred.method}.geojson")
    objectives = [p.objective for p in predictions]
    _emit(
        {
            "method": run.method,
            "lambda": lam,
            "predictions": str(out_path),
            "sequences": len(predictions),
            "mean_objective": float(np.mean(objectives)),
            "objectives": {p.video_id: p.objective for p in predictions},
        }
    )


def _prediction_truth(
    predictions: Sequence[TrajectoryPrediction], manifest: Optional[DatasetManifest]
) -> Tuple[List[List[Tuple[float, float]]], List[Tuple[float, float]]]:
    rankings, truths = [], []
    videos = {v.id: v for v in manifest.videos} if manifest is not None else {}
    for pred in predictions:
        truth = pred.truth
        if truth is None and pred.video_id in videos:
            truth = videos[pred.video_id].gps
        if truth is None:
            raise UsageError(f"no ground truth for video {pred.video_id!r}; pass --data")
        if len(truth) != len(pred.gps):
            raise UsageError(f"video {pred.video_id!r}: {len(pred.gps)} predicted frames for {len(truth)} ground-truth points")
        rankings.extend([[tuple(p)] for p in pred.gps])
        truths.extend(tuple(p) for p in truth)
    return rankings, truths


@cli.command("eval", help="Distance recall of trajectories or candidate rankings")
@click.option("--predictions", "predictions_file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--candidates", "candidates_file", type=click.Path(exists=True, dir_okay=False), default=None)
@click.option("--data", type=click.Path(exists=True), default=None, help="Ground truth when the inputs carry none.")
@click.option("--threshold-m", "thresholds", type=float, multiple=True, help=f"Match radius, repeatable (default {MILES_THRESHOLD_M}).")
@display_error
def eval_(predictions_file, candidates_file, data, thresholds):
    if (predictions_file is None) == (candidates_file is None):
        raise UsageError("pass exactly one of --predictions and --candidates")
    thresholds = thresholds or (MILES_THRESHOLD_M,)
    if any(t <= 0 for t in thresholds):
        raise UsageError("--threshold-m must be positive")
    manifest = _load_dataset(data)[0] if data else None
    gallery_size = None
    if predictions_file:
        predictions = load_predictions(predictions_file)
        rankings, truths = _prediction_truth(predictions, manifest)
        source, extra = "predictions", {"methods": sorted({p.method for p in predictions}), "sequences": len(predictions)}
    else:
        sequences = load_candidates(candidates_file)
        rankings, truths = [], []
        for seq in sequences:
            if seq.truth is None:
                raise UsageError(f"candidate sequence {seq.video_id!r} has no ground truth")
            rankings.extend(frame_rankings(seq))
            truths.extend(seq.truth)
        gallery_size = max((s.t for s in sequences), default=None)
        source, extra = "candidates", {"sequences": len(sequences)}
    if not rankings:
        raise UsageError("nothing to evaluate")
    reports = recall_sweep(rankings, truths, thresholds, gallery_size=gallery_size)
    _emit({"source": source, "queries": len(rankings), "reports": [r.to_dict() for r in reports], **extra})


@cli.command("plot", help="Draw trajectories against ground truth as SVG")
@click.argument("predictions_files", nargs=-1, type=click.Path(exists=True, dir_okay=False))
@click.option("--video", default=None, help="Video id, defaults to the first one found.")
@click.option("--data", type=click.Path(exists=True), default=None, help="Ground truth source.")
@click.option("--out", "-o", required=True, type=click.Path(dir_okay=False))
@click.option("--title", default="")
@display_error
def plot(predictions_files, video, data, out, title):
    predictions: List[TrajectoryPrediction] = []
    for path in predictions_files:
        predictions.extend(load_predictions(path))
    if video is None and predictions:
        video = predictions[0].video_id
    predictions = [p for p in predictions if p.video_id == video]
    truth = next((p.truth for p in predictions if p.truth is not None), None)
    if truth is None and data:
        manifest = _load_dataset(data)[0]
        match = [v for v in manifest.videos if video is None or v.id == video]
        if match:
            video = match[0].id
            truth = match[0].gps
    if truth is None and not predictions:
        raise UsageError("nothing to plot: give prediction files or --data with a known --video")
    path = plot_trajectories(predictions, [tuple(p) for p in truth] if truth else None, out, title=title or (video or ""))
    _emit({"svg": str(path), "video": video, "methods": [p.method for p in predictions], "truth": truth is not None})


@cli.command("bench", help="Encoder throughput and retrieval method comparison")
@click.option("--batch", type=int, default=16, show_default=True, help="Images per encode call.")
@click.option("--repeats", type=int, default=3, show_default=True)
@click.option("--instances", type=int, default=20, show_default=True, help="Noisy candidate sequences for the method comparison.")
@seed_option
@config_option
@display_error
def bench(batch, repeats, instances, seed, config_file):
    if batch < 1 or repeats < 1 or instances < 0:
        raise UsageError("--batch and --repeats must be positive, --instances non-negative")
    run, _ = _run_config("bench", config_file, {"seed": seed})
    encoder = ViewEncoder(run.encoder, seed=run.seed, view="street")
    size = run.encoder.image_size
    images = make_rng(run.seed, 7).uniform(0.0, 1.0, size=(batch, size, size, 3)).astype(np.float32)
    timings = []
    with count_ops() as counter:
        for _ in range(repeats):
            start = stopwatch_now()
            encode_batch(encoder, images)
            timings.append(stopwatch_now() - start)
    best = min(timings)
    memory = psutil.virtual_memory()
    payload: Dict[str, Any] = {
        "seed": run.seed,
        "encoder": run.encoder.model_dump(),
        "encode": {
            "batch": batch,
            "repeats": repeats,
            "best_s": best,
            "images_per_s": batch / best if best > 0 else None,
            "flops_per_image": counter.flops // (batch * repeats),
        },
        "hardware": {
            "cpu_count": psutil.cpu_count(logical=True),
            "cpu_physical": psutil.cpu_count(logical=False),
            "memory_total": memory.total,
            "memory_available": memory.available,
            "process_rss": psutil.Process().memory_info().rss,
        },
    }
    if instances:
        start = stopwatch_now()
        scores = compare_methods(noisy_benchmark(instances, seed=run.seed), ("nn", "ds", "dp"), lam=run.lam)
        payload["methods"] = {name: score.to_dict() for name, score in scores.items()}
        payload["methods_s"] = stopwatch_now() - start
    _emit(payload)
