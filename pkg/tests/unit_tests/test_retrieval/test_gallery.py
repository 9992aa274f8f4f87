import numpy as np
import pytest
from geotrack.errors import CapacityError, DataError, EmptyInputError, ShapeError, UsageError
from geotrack.retrieval import GeoRecord, batch_topk, build_gallery, load_gallery, save_gallery, topk


def _unit_rows(rng, m, d):
    rows = rng.normal(size=(m, d))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


@pytest.fixture
def gallery(rng):
    ids = [f"s{i:03d}" for i in range(50)]
    geo = [GeoRecord(40.0 + i * 1e-4, -75.0, ()) for i in range(50)]
    return build_gallery(_unit_rows(rng, 50, 8), ids, geo)


def test_query_equal_to_row_ranks_it_first(gallery):
    result = topk(gallery, gallery.vector("s007"), 3)
    assert result.ids[0] == "s007"
    assert result.scores[0] == pytest.approx(1.0, abs=1e-6)
    assert list(result.scores) == sorted(result.scores, reverse=True)


def test_full_ranking_is_a_permutation(gallery, rng):
    result = topk(gallery, rng.normal(size=8), len(gallery))
    assert sorted(result.ids) == sorted(gallery.ids)


def test_topk_matches_full_sort(rng):
    ids = [f"t{i:04d}" for i in range(1000)]
    index = build_gallery(_unit_rows(rng, 1000, 16), ids)
    queries = _unit_rows(rng, 5, 16)
    for query, result in zip(queries, batch_topk(index, queries, 25)):
        scores = index.embeddings.astype(np.float64) @ query
        oracle = sorted(range(1000), key=lambda i: (-scores[i], ids[i]))[:25]
        assert list(result.ids) == [ids[i] for i in oracle]


def test_ties_break_by_id():
    row = np.array([1.0, 0.0])
    index = build_gallery(np.stack([row, row, [0.0, 1.0]]), ["b", "a", "c"])
    assert topk(index, row, 3).ids == ("a", "b", "c")


def test_single_item_gallery(rng):
    index = build_gallery(_unit_rows(rng, 1, 4), ["only"])
    for query in rng.normal(size=(3, 4)):
        assert topk(index, query, 1).ids == ("only",)


def test_ranking_ignores_row_order(gallery, rng):
    query = rng.normal(size=8)
    order = rng.permutation(len(gallery))
    shuffled = build_gallery(gallery.embeddings[order], [gallery.ids[i] for i in order])
    assert topk(gallery, query, 10).ids == topk(shuffled, query, 10).ids


def test_empty_gallery_builds_but_cannot_be_queried():
    index = build_gallery(np.zeros((0, 4)), [])
    assert len(index) == 0
    with pytest.raises(EmptyInputError):
        topk(index, np.ones(4), 1)


def test_query_errors(gallery):
    with pytest.raises(CapacityError):
        topk(gallery, np.ones(8), 51)
    with pytest.raises(UsageError):
        topk(gallery, np.ones(8), 0)
    with pytest.raises(ShapeError):
        topk(gallery, np.ones(3), 1)


def test_build_validation(rng):
    rows = _unit_rows(rng, 3, 4)
    with pytest.raises(UsageError, match="duplicate gallery id 'a'"):
        build_gallery(rows, ["a", "b", "a"])
    with pytest.raises(UsageError, match="unit-norm"):
        build_gallery(rows * 2.0, ["a", "b", "c"])
    with pytest.raises(UsageError):
        build_gallery(rows, ["a", "b"])


def test_gallery_is_immutable(gallery):
    with pytest.raises(ValueError):
        gallery.embeddings[0, 0] = 0.0


def test_rebuild_gives_identical_bytes(gallery):
    again = build_gallery(np.array(gallery.embeddings), gallery.ids, gallery.geo)
    assert again.to_bytes() == gallery.to_bytes()


def test_subset_keeps_gallery_order(gallery):
    sub = gallery.subset(["s010", "s002", "s005"])
    assert sub.ids == ("s002", "s005", "s010")
    np.testing.assert_array_equal(sub.vector("s005"), gallery.vector("s005"))
    with pytest.raises(UsageError):
        gallery.subset(["nope"])


def test_gallery_file_round_trip(tmp_path, rng):
    geo = [GeoRecord(40.0, -75.0, ("s1", "s2")), GeoRecord(-33.5, 151.25, ())]
    index = build_gallery(_unit_rows(rng, 2, 6), ["L00_00", "L00_01"], geo)
    loaded = load_gallery(save_gallery(tmp_path / "large.gallery", index))
    assert loaded.ids == index.ids
    assert loaded.geo == index.geo
    np.testing.assert_array_equal(loaded.embeddings, index.embeddings)


def test_gallery_file_errors(tmp_path, gallery):
    with pytest.raises(DataError, match="not found"):
        load_gallery(tmp_path / "missing.gallery")
    path = tmp_path / "bad.gallery"
    path.write_bytes(b"NOPE" + gallery.to_bytes()[4:])
    with pytest.raises(DataError, match="bad magic") as e:
        load_gallery(path)
    assert e.value.path == str(path)
    path.write_bytes(gallery.to_bytes()[:-5])
    with pytest.raises(DataError, match="truncated"):
        load_gallery(path)
