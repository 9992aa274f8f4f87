"""
Desk-scale learning runs: the trained models must beat their untrained or
per-frame counterparts by a clear margin.

These train real models for several minutes and are only run by the
integration session.
"""

import numpy as np
import pytest
from geotrack.consistent import compare_methods, frame_accuracy, noisy_benchmark, run_method
from geotrack.geo.dataset import ImageCache, ingest
from geotrack.geo.synthetic import SceneSpec, generate_scene
from geotrack.models.adapter import AdapterConfig, UnifiedModel
from geotrack.models.encoder import EncoderConfig, encode_batch
from geotrack.models.retriever import RetrieverConfig, TransRetriever
from geotrack.retrieval import batch_topk, recall
from geotrack.retrieval.pipeline import large_gallery, seq_to_image, small_gallery, video_frames
from geotrack.training import TrainSchedule, load_encoder, load_unified, train_adapter_stage, train_image_stage, train_retriever
from geotrack.training.checkpoints import adapter_path, encoder_path

pytestmark = [pytest.mark.slow, pytest.mark.integration]

EVAL_SEEDS = range(5)
EVAL_SEQUENCES = 20

SCENE = SceneSpec(
    tile_px=32,
    meters_per_pixel=1.0,
    street_px=32,
    k=2,
    large_rows=10,
    large_cols=10,
    videos=200,
    frames=8,
    frame_step_m=6.0,
    val_fraction=0.2,
)
ENCODER = EncoderConfig(image_size=32, patch_size=8, depth=2, model_dim=32, heads=4, mlp_ratio=2.0, embed_dim=32)


# --------------------------------
# Trajectory selection
# --------------------------------


@pytest.fixture(scope="module")
def trained_retriever():
    model = TransRetriever(RetrieverConfig(), seed=0)
    schedule = TrainSchedule.for_stage("retriever", epochs=60)
    train_retriever(model, noisy_benchmark(64, seed=100), schedule, require_labels=True)
    return model


@pytest.fixture(scope="module")
def benchmarks():
    return [noisy_benchmark(EVAL_SEQUENCES, seed=seed) for seed in EVAL_SEEDS]


@pytest.fixture(scope="module")
def accuracies(trained_retriever, benchmarks):
    out = []
    for sequences in benchmarks:
        scores = compare_methods(sequences, ("nn", "ds", "dp", "transretriever"), model=trained_retriever)
        out.append({method: score.frame_accuracy for method, score in scores.items()})
    return out


@pytest.mark.timeout(1800)
def test_nearest_neighbour_is_fooled_by_the_noise(accuracies):
    assert all(acc["nn"] <= 0.8 for acc in accuracies)


@pytest.mark.timeout(1800)
def test_accuracy_ordering_holds_on_every_seed(accuracies):
    for acc in accuracies:
        assert acc["nn"] <= acc["ds"] <= acc["transretriever"]


@pytest.mark.timeout(1800)
def test_transretriever_margins(accuracies):
    mean = {method: float(np.mean([acc[method] for acc in accuracies])) for method in accuracies[0]}
    assert mean["transretriever"] >= mean["dp"] - 0.05
    assert mean["transretriever"] >= mean["nn"] + 0.10


@pytest.mark.timeout(1800)
def test_transretriever_agrees_with_dp(trained_retriever, benchmarks):
    agreement = []
    for sequences in benchmarks:
        for seq in sequences:
            ours = run_method("transretriever", seq, model=trained_retriever).choices
            agreement.append(frame_accuracy(ours, run_method("dp", seq).choices))
    assert np.mean(agreement) >= 0.9


# --------------------------------
# Two-stage encoder training
# --------------------------------


@pytest.fixture(scope="module")
def trained_stages(tmp_path_factory):
    root = tmp_path_factory.mktemp("learning")
    data, ckpt = root / "data", root / "ckpt"
    generate_scene(SCENE, data, seed=0)
    manifest, _ = ingest(data)
    images = ImageCache(data)
    train_image_stage(manifest, images, TrainSchedule.for_stage("image", epochs=30, batch=16, lr=1e-3), ckpt, ENCODER)
    train_adapter_stage(
        manifest,
        images,
        TrainSchedule.for_stage("adapter", epochs=20, batch=4, lr=1e-3),
        ckpt,
        AdapterConfig(variant="cls", t_max=16),
    )
    return manifest, images, ckpt


def _sequence_r1(street: UnifiedModel, aerial: UnifiedModel, manifest, images) -> float:
    index = large_gallery(aerial, manifest, images)
    videos = manifest.split("val")
    results = [seq_to_image(street, video_frames(v, images), index, len(index), query_id=v.id) for v in videos]
    return recall(results, [v.large_tile for v in videos], mode="id", gallery_size=len(index)).r1


@pytest.mark.timeout(1800)
def test_stage1_frame_recall(trained_stages):
    manifest, images, ckpt = trained_stages
    street, aerial = load_encoder(encoder_path(ckpt, "street")), load_encoder(encoder_path(ckpt, "aerial"))
    index = small_gallery(aerial, manifest, images)
    assert len(index) == 400
    rankings, truths = [], []
    for video in manifest.split("val"):
        results = batch_topk(index, encode_batch(street, video_frames(video, images)), 10)
        rankings.extend([[(index.geo_of(i).lat, index.geo_of(i).lon) for i in r.ids] for r in results])
        truths.extend(tuple(p) for p in video.gps)
    report = recall(rankings, truths, mode="distance", gallery_size=len(index))
    assert report.r1 >= 0.8


@pytest.mark.timeout(1800)
def test_stage2_sequence_recall_beats_untrained_adapters(trained_stages):
    manifest, images, ckpt = trained_stages
    trained = _sequence_r1(
        load_unified(encoder_path(ckpt, "street"), adapter_path(ckpt, "street")),
        load_unified(encoder_path(ckpt, "aerial"), adapter_path(ckpt, "aerial")),
        manifest,
        images,
    )
    untrained = _sequence_r1(
        load_unified(encoder_path(ckpt, "street")), load_unified(encoder_path(ckpt, "aerial")), manifest, images
    )
    assert trained >= 0.5
    assert trained > untrained
