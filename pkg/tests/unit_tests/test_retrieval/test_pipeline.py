import json

import numpy as np
import pytest
from geotrack.errors import DataError, EmptyInputError, UsageError
from geotrack.models.adapter import UnifiedModel, encode_video
from geotrack.models.encoder import ViewEncoder, encode_image
from geotrack.retrieval import GeoRecord, RetrievalResult, build_gallery
from geotrack.retrieval.pipeline import (
    frame_rankings,
    frame_to_frame,
    gallery_size_sweep,
    large_gallery,
    load_results,
    make_small_gallery,
    resolve_top_t,
    save_results,
    seq_to_image,
    small_gallery,
    video_frames,
)


def _unit_rows(rng, m, d):
    rows = rng.normal(size=(m, d))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


@pytest.fixture
def hierarchy(rng):
    small_ids = [f"s{i}" for i in range(6)]
    small = build_gallery(_unit_rows(rng, 6, 4), small_ids, [GeoRecord(40.0, -75.0 + i * 1e-4) for i in range(6)])
    large_geo = [
        GeoRecord(40.0, -75.0, ("s0", "s1", "s2")),
        GeoRecord(40.0, -74.9, ("s2", "s3")),
        GeoRecord(40.0, -74.8, ("s4", "s5")),
    ]
    large = build_gallery(_unit_rows(rng, 3, 4), ["L0", "L1", "L2"], large_geo)
    ranked = RetrievalResult("v0", ("L1", "L0", "L2"), (0.9, 0.5, 0.1))
    return small, large, ranked


@pytest.mark.parametrize(
    "t, size, expected",
    [(3, 100, 3), ("1%", 250, 3), ("1%", 10, 1), ("all", 7, 7), (" 5 ", 10, 5)],
)
def test_resolve_top_t(t, size, expected):
    assert resolve_top_t(t, size) == expected


@pytest.mark.parametrize("t", [0, "zero", "-2"])
def test_resolve_top_t_rejects(t):
    with pytest.raises(UsageError):
        resolve_top_t(t, 10)


def test_small_gallery_deduplicates_children(hierarchy):
    small, large, ranked = hierarchy
    assert make_small_gallery(ranked, large, small, 1).ids == ("s2", "s3")
    assert make_small_gallery(ranked, large, small, 2).ids == ("s0", "s1", "s2", "s3")


def test_small_gallery_grows_with_t(hierarchy):
    small, large, ranked = hierarchy
    sizes = [len(make_small_gallery(ranked, large, small, t)) for t in (1, 2, 3)]
    assert sizes == sorted(sizes)


def test_all_large_tiles_give_the_global_gallery(hierarchy):
    small, large, ranked = hierarchy
    full = make_small_gallery(ranked, large, small, "all")
    assert full.ids == small.ids
    np.testing.assert_array_equal(full.embeddings, small.embeddings)


def test_small_gallery_needs_children(rng):
    large = build_gallery(_unit_rows(rng, 1, 4), ["L0"], [GeoRecord(0.0, 0.0, ())])
    small = build_gallery(_unit_rows(rng, 1, 4), ["s0"])
    with pytest.raises(EmptyInputError):
        make_small_gallery(RetrievalResult("v", ("L0",), (1.0,)), large, small, 1)


def test_seq_to_image_finds_own_embedding(dataset, tiny_encoder_config, rng):
    manifest, images, _ = dataset
    model = UnifiedModel(ViewEncoder(tiny_encoder_config, seed=0, view="street").freeze())
    frames = video_frames(manifest.videos[0], images)
    own = encode_video(model, frames)
    others = _unit_rows(rng, 4, own.shape[0])
    large = build_gallery(np.vstack([others, own[None]]), ["a", "b", "c", "d", "own"])
    assert seq_to_image(model, frames, large, 1, query_id="v").ids == ("own",)


@pytest.fixture
def frame_setup(dataset, tiny_encoder_config):
    manifest, images, _ = dataset
    street = ViewEncoder(tiny_encoder_config, seed=0, view="street")
    aerial = ViewEncoder(tiny_encoder_config, seed=1, view="aerial")
    gallery = small_gallery(aerial, manifest, images)
    video = manifest.videos[0]
    return street, gallery, video_frames(video, images), video


def test_small_gallery_matches_encoder_outputs(dataset, tiny_encoder_config):
    manifest, images, _ = dataset
    aerial = ViewEncoder(tiny_encoder_config, seed=1, view="aerial")
    gallery = small_gallery(aerial, manifest, images, chunk=5)
    tile = manifest.small_tiles[3]
    np.testing.assert_allclose(gallery.vector(tile.id), encode_image(aerial, images(tile.path)), atol=1e-6)


def test_frame_to_frame_candidates(frame_setup):
    street, gallery, frames, video = frame_setup
    seq = frame_to_frame(street, frames, gallery, 4, frame_ids=video.frames, truth=video.gps, video_id=video.id)
    assert (seq.n, seq.t) == (len(frames), 4)
    sims = seq.sims()
    assert np.all((sims >= -1.0) & (sims <= 1.0))
    assert np.all(np.diff(sims, axis=1) <= 1e-9)
    again = frame_to_frame(street, frames, gallery, 4, frame_ids=video.frames, truth=video.gps, video_id=video.id)
    assert again.sets == seq.sets


def test_single_candidate_is_plain_nearest_neighbour(frame_setup):
    street, gallery, frames, _ = frame_setup
    seq = frame_to_frame(street, frames, gallery, 1)
    assert seq.t == 1
    for i, frame in enumerate(frames):
        best = int(np.argmax(gallery.embeddings @ encode_image(street, frame)))
        assert seq.sets[i][0].source_id == gallery.ids[best]


def test_small_gallery_pads_candidates(frame_setup):
    street, gallery, frames, _ = frame_setup
    tiny = gallery.subset(gallery.ids[:2])
    seq = frame_to_frame(street, frames, tiny, 5)
    assert seq.t == 5
    assert all(c.sim == -1.0 for c in seq.sets[0][2:])
    assert [len(r) for r in frame_rankings(seq)] == [2] * len(frames)
    with pytest.raises(UsageError):
        frame_to_frame(street, frames, gallery, 0)


def test_gallery_size_sweep(dataset, tiny_encoder_config):
    manifest, images, _ = dataset
    street = ViewEncoder(tiny_encoder_config, seed=0, view="street")
    small = small_gallery(ViewEncoder(tiny_encoder_config, seed=1, view="aerial"), manifest, images)
    large = large_gallery(UnifiedModel(ViewEncoder(tiny_encoder_config, seed=1, view="aerial").freeze()), manifest, images)
    video_model = UnifiedModel(ViewEncoder(tiny_encoder_config, seed=0, view="street").freeze())
    videos = manifest.videos[:3]
    clips = [video_frames(v, images) for v in videos]
    ranked = [seq_to_image(video_model, c, large, len(large), query_id=v.id) for c, v in zip(clips, videos)]

    points = gallery_size_sweep(street, clips, [v.gps for v in videos], ranked, large, small, [1, "all"], t_candidates=3)

    assert [p.t for p in points] == [1, len(large)]
    assert points[0].mean_gallery_size <= points[1].mean_gallery_size == len(small)
    assert all(p.report.queries == sum(len(c) for c in clips) for p in points)
    with pytest.raises(UsageError):
        gallery_size_sweep(street, clips, [], ranked, large, small, [1])


def test_results_round_trip(tmp_path):
    results = [RetrievalResult("v0", ("L1", "L0"), (0.75, 0.5)), RetrievalResult("v1", ("L2",), (0.25,))]
    assert load_results(save_results(tmp_path / "seq.json", results)) == results


def test_results_file_errors(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_results(tmp_path / "missing.json")
    path = tmp_path / "seq.json"
    path.write_text(json.dumps({"version": 3, "results": []}))
    with pytest.raises(DataError, match="version"):
        load_results(path)
    path.write_text(json.dumps({"version": 1, "results": [{"query_id": "v0"}]}))
    with pytest.raises(DataError, match="malformed"):
        load_results(path)
