"""
End-to-end runs of the geotrack command line on a small synthetic scene.

Every stage is driven through the CLI, the way a user would chain them:
gen, the training stages, gallery building, hierarchical inference,
trajectory selection, evaluation and plotting.
"""

import json
from pathlib import Path

import numpy as np
import pytest
from click.testing import CliRunner
from geotrack.cli import cli
from geotrack.consistent import NoiseSpec, compare_methods, load_candidates, load_predictions, noisy_benchmark
from geotrack.plot.svg import read_polylines
from geotrack.retrieval import load_gallery
from geotrack.training import load_encoder
from geotrack.training.checkpoints import encoder_digest, encoder_path

pytestmark = [pytest.mark.slow, pytest.mark.integration]

CONFIG = """
seed = 3
scene.tile_px = 16
scene.street_px = 16
scene.k = 2
scene.large_rows = 2
scene.large_cols = 3
scene.videos = 12
scene.frames = 4
scene.frame_step_m = 3.0
scene.street_fov_m = 8.0
scene.extra_roads = 2
scene.val_fraction = 0.25
encoder.image_size = 16
encoder.patch_size = 8
encoder.depth = 2
encoder.model_dim = 16
encoder.heads = 2
encoder.mlp_ratio = 2.0
encoder.embed_dim = 8
adapter.t_max = 16
retriever.dim = 16
retriever.ff_dim = 32
retriever.heads = 2
retriever.encoder_layers = 1
retriever.decoder_layers = 1
retriever.max_sets = 16
"""


def invoke(runner, *args):
    result = runner.invoke(cli.cli, [str(a) for a in args], catch_exceptions=False)
    assert result.exit_code == 0, result.output
    return json.loads(result.output[result.output.index("{") :])


class TestPipelineIntegration:
    """One shared run of the full pipeline; each test checks one stage's output."""

    @pytest.fixture(scope="class")
    def workspace(self, tmp_path_factory):
        root = tmp_path_factory.mktemp("pipeline")
        config = root / "run.cfg"
        config.write_text(CONFIG)
        runner = CliRunner()
        data, ckpt = root / "data", root / "ckpt"
        out = {"root": root, "data": data, "ckpt": ckpt}

        out["gen"] = invoke(runner, "gen", "--out", data, "--config", config)
        out["image"] = invoke(
            runner, "train", "--stage", "image", "--data", data, "--out", ckpt, "--epochs", 2, "--batch", 4, "--lr", 1e-3, "--config", config
        )
        out["digest"] = encoder_digest(load_encoder(encoder_path(ckpt, "street")), load_encoder(encoder_path(ckpt, "aerial")))
        out["adapter"] = invoke(
            runner, "train", "--stage", "adapter", "--data", data, "--out", ckpt, "--epochs", 2, "--batch", 2, "--lr", 1e-3, "--config", config
        )
        out["baseline"] = invoke(
            runner, "train", "--stage", "baseline", "--data", data, "--out", ckpt, "--epochs", 1, "--batch", 2, "--config", config
        )
        out["gallery"] = invoke(runner, "build-gallery", "--data", data, "--checkpoints", ckpt, "--config", config)
        out["seq"] = invoke(runner, "infer-seq", "--data", data, "--checkpoints", ckpt, "--split", "all", "--top-t", 2)
        out["frames"] = invoke(
            runner, "infer-frames", "--data", data, "--checkpoints", ckpt, "--top-t-large", 2, "--candidates", 3
        )
        candidates = ckpt / "candidates.json"
        out["methods"] = {
            m: invoke(runner, "retrieve", "--candidates", candidates, "--method", m, "--geojson", root / "geojson")
            for m in ("nn", "ds", "dp")
        }
        out["retriever"] = invoke(
            runner, "train", "--stage", "retriever", "--candidates", candidates, "--out", ckpt, "--epochs", 5, "--batch", 4, "--config", config
        )
        out["methods"]["transretriever"] = invoke(
            runner, "retrieve", "--candidates", candidates, "--method", "transretriever", "--checkpoints", ckpt, "--config", config
        )
        out["eval"] = invoke(runner, "eval", "--predictions", ckpt / "predictions.dp.json", "--threshold-m", 80.4672, "--threshold-m", 1000)
        out["eval_candidates"] = invoke(runner, "eval", "--candidates", candidates)
        out["plot"] = invoke(
            runner, "plot", ckpt / "predictions.nn.json", ckpt / "predictions.dp.json", "--out", root / "plot.svg"
        )
        out["bench"] = invoke(runner, "bench", "--batch", 2, "--repeats", 1, "--instances", 2, "--config", config)
        return out

    def test_generated_dataset(self, workspace):
        gen = workspace["gen"]
        assert gen["videos"] == 12
        assert gen["large_tiles"] == 6
        assert gen["small_tiles"] == 24
        assert Path(gen["manifest"]).exists()

    def test_training_stages_write_checkpoints(self, workspace):
        ckpt = workspace["ckpt"]
        for name in ("street.ckpt", "aerial.ckpt", "street_adapter.ckpt", "aerial_adapter.ckpt", "street_baseline.ckpt", "retriever.ckpt"):
            assert (ckpt / name).exists(), name
        assert workspace["image"]["summary"]["epochs"] == 2
        assert Path(workspace["image"]["metrics"]).exists()

    def test_adapter_stage_keeps_encoders_frozen(self, workspace):
        assert workspace["adapter"]["summary"]["encoder_digest"] == workspace["digest"]
        ckpt = workspace["ckpt"]
        after = encoder_digest(load_encoder(encoder_path(ckpt, "street")), load_encoder(encoder_path(ckpt, "aerial")))
        assert after == workspace["digest"]

    def test_galleries(self, workspace):
        small = load_gallery(workspace["ckpt"] / "small.gallery")
        large = load_gallery(workspace["ckpt"] / "large.gallery")
        assert len(small) == 24 and len(large) == 6
        assert all(len(g.children) == 4 for g in large.geo)
        np.testing.assert_allclose(np.linalg.norm(small.embeddings, axis=1), 1.0, atol=1e-4)

    def test_sequence_recall_report(self, workspace):
        seq = workspace["seq"]
        assert seq["queries"] == 12
        assert seq["top_t"] == 2
        report = seq["recall"]
        assert 0.0 <= report["r1"] <= report["r5"] <= report["r10"] <= 1.0
        assert report["r10"] == 1.0

    def test_frame_candidates(self, workspace):
        frames = workspace["frames"]
        assert frames["sequences"] == 12
        assert frames["mean_gallery_size"] <= 8
        sequences = load_candidates(frames["candidates"])
        assert all(s.t == 3 and s.truth is not None for s in sequences)

    def test_dp_never_loses_to_other_methods_on_the_objective(self, workspace):
        methods = workspace["methods"]
        dp = methods["dp"]["objectives"]
        for name in ("nn", "ds", "transretriever"):
            for video, objective in methods[name]["objectives"].items():
                assert dp[video] <= objective + 1e-6
        assert (workspace["root"] / "geojson").is_dir()

    def test_evaluation_reports(self, workspace):
        reports = workspace["eval"]["reports"]
        assert [r["threshold_m"] for r in reports] == [80.4672, 1000.0]
        assert reports[0]["r1"] <= reports[1]["r1"]
        assert workspace["eval"]["queries"] == 12 * 4
        assert workspace["eval_candidates"]["source"] == "candidates"

    def test_plot(self, workspace):
        lines = read_polylines(workspace["plot"]["svg"])
        assert set(lines) == {"truth", "nn", "dp"}
        assert all(len(v) == 4 for v in lines.values())

    def test_predictions_are_consistent_with_candidates(self, workspace):
        predictions = load_predictions(workspace["ckpt"] / "predictions.dp.json")
        sequences = {s.video_id: s for s in load_candidates(workspace["ckpt"] / "candidates.json")}
        for pred in predictions:
            seq = sequences[pred.video_id]
            assert pred.ids == [seq.sets[i][j].source_id for i, j in enumerate(pred.choices)]

    def test_bench(self, workspace):
        bench = workspace["bench"]
        assert bench["encode"]["images_per_s"] > 0
        assert set(bench["methods"]) == {"nn", "ds", "dp"}


def test_consistency_beats_per_frame_matching():
    sequences = noisy_benchmark(30, seed=11, spec=NoiseSpec(frames=30, candidates=8))
    scores = compare_methods(sequences, ("nn", "ds", "dp"))
    assert scores["dp"].frame_accuracy > scores["nn"].frame_accuracy
    assert scores["dp"].objective <= scores["ds"].objective
    assert scores["dp"].objective <= scores["nn"].objective


def test_deterministic_replay(tmp_path):
    runner = CliRunner()
    config = tmp_path / "run.cfg"
    config.write_text(CONFIG)
    digests = []
    for name in ("a", "b"):
        data, ckpt = tmp_path / name / "data", tmp_path / name / "ckpt"
        invoke(runner, "gen", "--out", data, "--config", config)
        invoke(runner, "train", "--stage", "image", "--data", data, "--out", ckpt, "--epochs", 1, "--batch", 4, "--config", config)
        digests.append(encoder_digest(load_encoder(encoder_path(ckpt, "street")), load_encoder(encoder_path(ckpt, "aerial"))))
        digests.append((data / "manifest.json").read_bytes())
    assert digests[0] == digests[2]
    assert digests[1] == digests[3]
