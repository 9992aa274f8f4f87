import numpy as np
import pytest
from geotrack.errors import EmptyInputError, UsageError
from geotrack.geo.geodesy import MILES_THRESHOLD_M, GpsPoint, destination
from geotrack.retrieval import build_gallery, one_percent_k, rank_by_l2, recall, recall_sweep, topk
from geotrack.retrieval.metrics import report_from_hits
from hypothesis import given
from hypothesis import strategies as st


def _ranking(truth, rank, size=10):
    """Ranked ids of length ``size`` with ``truth`` at ``rank`` (absent when rank is None)."""
    ids = [f"{truth}-x{i}" for i in range(size)]
    if rank is not None:
        ids[rank] = truth
    return ids


def test_perfect_predictions():
    report = recall([["a"], ["b"], ["c"]], ["a", "b", "c"])
    assert (report.r1, report.r5, report.r10, report.r1pct) == (1.0, 1.0, 1.0, 1.0)


def test_half_at_rank_one_rest_at_rank_five():
    ranks = [0, 0, 4, 4]
    truth = [f"q{i}" for i in range(4)]
    report = recall([_ranking(t, r) for t, r in zip(truth, ranks)], truth)
    assert report.r1 == 0.5
    assert report.r5 == 1.0
    assert report.queries == 4


def test_hand_counted_fixture():
    ranks = [0, 0, 1, 4, 5, 9, None, 2, 0, 7]
    truth = [f"q{i}" for i in range(10)]
    report = recall([_ranking(t, r) for t, r in zip(truth, ranks)], truth, gallery_size=200)
    assert report.k_1pct == 2
    assert report.r1 == pytest.approx(0.3)
    assert report.r1pct == pytest.approx(0.4)
    assert report.r5 == pytest.approx(0.6)
    assert report.r10 == pytest.approx(0.9)
    assert report.at(5) == report.r5


def test_accepted_id_sets():
    report = recall([["a", "b"], ["c", "d"]], [{"x", "b"}, {"c"}])
    assert report.r1 == 0.5
    assert report.r5 == 1.0


@pytest.mark.parametrize("size, k", [(0, 1), (1, 1), (100, 1), (101, 2), (500, 5), (4900, 49)])
def test_one_percent_k(size, k):
    assert one_percent_k(size) == k


def test_distance_threshold_straddle():
    truth = GpsPoint(40.0, -75.0)
    inside = destination(truth, 37.0, 80.0)
    outside = destination(truth, 37.0, 81.0)
    assert MILES_THRESHOLD_M == pytest.approx(80.4672)
    report = recall(
        [[(inside.lat, inside.lon)], [(outside.lat, outside.lon)]],
        [(truth.lat, truth.lon)] * 2,
        mode="distance",
    )
    assert report.r1 == 0.5
    assert report.threshold_m == MILES_THRESHOLD_M


def test_distance_mode_finds_later_hits():
    truth = GpsPoint(-12.0, 130.0)
    far, near = destination(truth, 0.0, 500.0), destination(truth, 90.0, 10.0)
    report = recall([[(far.lat, far.lon), (near.lat, near.lon)], []], [(truth.lat, truth.lon)] * 2, mode="distance")
    assert (report.r1, report.r5) == (0.0, 0.5)


def test_recall_sweep_grows_with_threshold():
    truth = GpsPoint(40.0, -75.0)
    points = [destination(truth, 0.0, d) for d in (20.0, 60.0, 120.0)]
    reports = recall_sweep([[(p.lat, p.lon)] for p in points], [(truth.lat, truth.lon)] * 3, [25.0, 80.4672, 200.0])
    assert [r.r1 for r in reports] == pytest.approx([1 / 3, 2 / 3, 1.0])


def test_recall_errors():
    with pytest.raises(EmptyInputError):
        recall([], [])
    with pytest.raises(UsageError):
        recall([["a"]], ["a"], mode="fuzzy")
    with pytest.raises(UsageError):
        recall([["a"], ["b"]], ["a"])


@given(st.lists(st.one_of(st.integers(0, 300), st.none()), min_size=1, max_size=40), st.integers(1, 5000))
def test_recall_is_monotone_in_k(ranks, size):
    hits = np.array([np.inf if r is None else r for r in ranks], dtype=np.float64)
    report = report_from_hits(hits, size, "id")
    assert report.r1 <= report.r5 <= report.r10 <= 1.0
    assert report.k_1pct == one_percent_k(size)


def test_l2_ranking_equals_cosine_ranking(rng):
    rows = rng.normal(size=(200, 12))
    index = build_gallery(rows / np.linalg.norm(rows, axis=1, keepdims=True), [f"i{n:03d}" for n in range(200)])
    for query in rng.normal(size=(5, 12)):
        assert rank_by_l2(index, query) == list(topk(index, query, 200).ids)
