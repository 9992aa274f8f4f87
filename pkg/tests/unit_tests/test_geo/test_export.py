import json

import pytest
from geotrack.consistent.benchmark import adversarial_fixture
from geotrack.consistent.candidates import make_prediction
from geotrack.consistent.methods import dp_oracle
from geotrack.errors import DataError
from geotrack.geo.export import export_trajectory, read_trajectory, trajectory_features


@pytest.fixture
def prediction():
    return dp_oracle(adversarial_fixture())


def test_feature_collection_structure(prediction):
    data = trajectory_features(prediction)
    assert data["type"] == "FeatureCollection"
    kinds = [f["geometry"]["type"] for f in data["features"]]
    assert kinds == ["LineString"] + ["Point"] * len(prediction)
    line = data["features"][0]["geometry"]["coordinates"]
    lat, lon = prediction.gps[0]
    assert line[0] == [pytest.approx(lon), pytest.approx(lat)]
    assert data["features"][1]["properties"]["sim"] == prediction.sims[0]


def test_single_frame_has_no_linestring():
    seq = adversarial_fixture()
    single = type(seq)(sets=seq.sets[:1], zone=seq.zone, hemisphere=seq.hemisphere)
    data = trajectory_features(make_prediction(single, [0], "nn", 50.0))
    assert [f["geometry"]["type"] for f in data["features"]] == ["Point"]


def test_round_trip(tmp_path, prediction):
    path = export_trajectory(prediction, tmp_path / "out" / "dp.geojson")
    json.loads(path.read_text())
    assert read_trajectory(path) == [tuple(p) for p in prediction.gps]


def test_read_rejects_non_geojson(tmp_path):
    path = tmp_path / "x.geojson"
    path.write_text('{"type": "Feature"}')
    with pytest.raises(DataError, match="FeatureCollection"):
        read_trajectory(path)
    with pytest.raises(DataError, match="not found"):
        read_trajectory(tmp_path / "missing.geojson")
