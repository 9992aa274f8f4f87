import json
import math

import numpy as np
import pytest
from geotrack.consistent import (
    CandidateSequence,
    CandidateToken,
    RawCandidate,
    adversarial_fixture,
    dp_objective,
    dp_oracle,
    load_candidates,
    load_predictions,
    nearest_labels,
    nn_baseline,
    save_candidates,
    save_predictions,
    tokenize_candidates,
)
from geotrack.consistent.candidates import PAD_SIM
from geotrack.errors import DataError, EmptyInputError, GeodesyError, UsageError


def _sequence(xy, sims):
    sets = [[CandidateToken(float(x), float(y), float(s)) for (x, y), s in zip(frame, row)] for frame, row in zip(xy, sims)]
    return CandidateSequence(sets=sets)


def test_single_candidate_tokenizes_to_origin():
    seq = tokenize_candidates([[RawCandidate("a", 40.0, -75.0, 0.7)]])
    np.testing.assert_allclose(seq.tokens(), [[[0.0, 0.0, 0.7]]], atol=1e-6)
    assert seq.zone == 18
    assert seq.hemisphere == "N"


def test_tokens_ignore_translation(rng):
    xy = rng.uniform(0, 500, size=(4, 3, 2)) + 400_000.0
    sims = rng.uniform(-1, 1, size=(4, 3))
    shifted = xy + np.array([500.0, -300.0])
    np.testing.assert_allclose(_sequence(xy, sims).tokens(), _sequence(shifted, sims).tokens(), atol=1e-4)


def test_tokens_scale_meters_by_hundred():
    seq = _sequence(np.array([[[0.0, 0.0]], [[200.0, 0.0]]]), np.array([[0.5], [0.5]]))
    np.testing.assert_allclose(seq.tokens()[:, 0, :2], [[-1.0, 0.0], [1.0, 0.0]])


def test_short_sets_are_padded_with_weakest_candidate():
    frames = [
        [RawCandidate("a", 40.0, -75.0, 0.9), RawCandidate("b", 40.001, -75.0, 0.3)],
        [RawCandidate("c", 40.0, -75.001, 0.8)],
    ]
    seq = tokenize_candidates(frames, t=3)
    assert seq.t == 3
    padded = seq.sets[1]
    assert [c.sim for c in padded] == [0.8, PAD_SIM, PAD_SIM]
    assert padded[2].source_id == "c"
    assert seq.sets[0][2].source_id == "b"


def test_long_sets_are_cut():
    frames = [[RawCandidate(str(j), 40.0, -75.0 + 0.001 * j, 0.5 - 0.1 * j) for j in range(4)]]
    assert [c.source_id for c in tokenize_candidates(frames, t=2).sets[0]] == ["0", "1"]


def test_mixed_zones_rejected():
    frames = [[RawCandidate("a", 40.0, -75.1, 0.5)], [RawCandidate("b", 40.0, -71.9, 0.5)]]
    with pytest.raises(GeodesyError):
        tokenize_candidates(frames)


@pytest.mark.parametrize("frames", [[], [[]]])
def test_tokenize_needs_candidates(frames):
    with pytest.raises(EmptyInputError):
        tokenize_candidates(frames)


def test_sequence_validation():
    a = CandidateToken(0.0, 0.0, 0.5)
    with pytest.raises(EmptyInputError):
        CandidateSequence(sets=[])
    with pytest.raises(UsageError):
        CandidateSequence(sets=[[a, a], [a]])
    with pytest.raises(UsageError):
        CandidateSequence(sets=[[a, a]], labels=[2])
    with pytest.raises(UsageError):
        CandidateToken(0.0, 0.0, 1.5)
    with pytest.raises(UsageError):
        CandidateToken(math.inf, 0.0, 0.5)


def test_nearest_labels_recover_fixture_labels():
    seq = adversarial_fixture()
    assert nearest_labels(seq) == seq.labels
    with pytest.raises(UsageError):
        nearest_labels(_sequence(np.zeros((2, 2, 2)), np.zeros((2, 2))))


def test_objective_of_straight_path():
    seq = adversarial_fixture()
    # 8 steps of 10 m, nine similarities of 0.8
    assert dp_objective(seq, seq.labels, 50.0) == pytest.approx(80.0 - 50.0 * 7.2, abs=1e-6)
    with pytest.raises(UsageError):
        dp_objective(seq, [0, 0], 50.0)


def test_candidates_round_trip(tmp_path):
    seq = adversarial_fixture()
    path = save_candidates(tmp_path / "cands.json", [seq])
    (loaded,) = load_candidates(path)
    assert loaded.sets == seq.sets
    assert loaded.labels == seq.labels
    assert loaded.truth == seq.truth
    assert (loaded.zone, loaded.hemisphere, loaded.frame_ids) == (seq.zone, seq.hemisphere, seq.frame_ids)


def test_candidates_file_errors(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_candidates(tmp_path / "missing.json")

    path = tmp_path / "bad.json"
    path.write_text('{\n"version": 1,\n"sequences": [\n')
    with pytest.raises(DataError, match="invalid JSON"):
        load_candidates(path)

    path.write_text(json.dumps({"version": 2, "sequences": []}))
    with pytest.raises(DataError, match="version"):
        load_candidates(path)

    frame = {"frame_id": "0", "candidates": [{"id": "x", "utm_y": 1.0, "sim": 0.5}]}
    path.write_text(json.dumps({"version": 1, "sequences": [{"zone": 18, "frames": [frame]}]}))
    with pytest.raises(DataError, match="malformed"):
        load_candidates(path)


def test_predictions_round_trip(tmp_path):
    seq = adversarial_fixture()
    preds = [nn_baseline(seq), dp_oracle(seq)]
    loaded = load_predictions(save_predictions(tmp_path / "preds.json", preds))
    assert [p.to_dict() for p in loaded] == [p.to_dict() for p in preds]
    assert loaded[1].truth == [list(p) for p in seq.truth]


def test_predictions_reject_ragged_trajectory(tmp_path):
    pred = dp_oracle(adversarial_fixture()).to_dict()
    pred["gps"] = pred["gps"][:-1]
    path = tmp_path / "preds.json"
    path.write_text(json.dumps({"version": 1, "predictions": [pred]}))
    with pytest.raises(DataError, match="points"):
        load_predictions(path)
    path.write_text(json.dumps({"version": 1, "sequences": []}))
    with pytest.raises(DataError, match="not a trajectory"):
        load_predictions(path)
