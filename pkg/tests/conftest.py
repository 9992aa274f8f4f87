from __future__ import annotations

import os
from pathlib import Path
from typing import Callable, Generator

import numpy as np
import pytest
from click.testing import CliRunner
from geotrack.errors import term
from geotrack.geo.dataset import DatasetManifest, ImageCache
from geotrack.geo.synthetic import SceneSpec, generate_scene
from geotrack.models.adapter import AdapterConfig
from geotrack.models.encoder import EncoderConfig
from geotrack.models.retriever import RetrieverConfig

# --------------------------------
# Global pytest configuration
# --------------------------------


@pytest.fixture(autouse=True)
def setup_geotrack_env_variables(monkeypatch: pytest.MonkeyPatch, tmp_path_factory) -> None:
    """Keep debug logs and config lookups inside the test sandbox."""
    monkeypatch.setenv("GEOTRACK_DIR", str(tmp_path_factory.getbasetemp() / "geotrack-home"))
    monkeypatch.delenv("GEOTRACK_CONFIG", raising=False)
    monkeypatch.delenv("GEOTRACK_SEED", raising=False)


@pytest.fixture(autouse=True)
def reset_term() -> Generator[None, None, None]:
    yield
    term.termsetup(False, None)
    term._state.seen.clear()


# --------------------------------
# Misc Fixtures utilities
# --------------------------------


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture
def runner() -> CliRunner:
    return CliRunner()


@pytest.fixture
def tiny_encoder_config() -> EncoderConfig:
    return EncoderConfig(image_size=16, patch_size=8, depth=2, model_dim=16, heads=2, mlp_ratio=2.0, embed_dim=8)


@pytest.fixture
def tiny_adapter_config() -> AdapterConfig:
    return AdapterConfig(variant="cls", t_max=16)


@pytest.fixture
def tiny_retriever_config() -> RetrieverConfig:
    return RetrieverConfig(dim=16, ff_dim=32, heads=2, encoder_layers=1, decoder_layers=1, max_sets=16)


@pytest.fixture
def tiny_scene() -> SceneSpec:
    return SceneSpec(
        tile_px=16,
        k=2,
        large_rows=2,
        large_cols=2,
        videos=6,
        frames=3,
        frame_step_m=3.0,
        street_px=16,
        street_fov_m=8.0,
        extra_roads=2,
        val_fraction=0.34,
    )


@pytest.fixture
def make_dataset(tmp_path: Path, tiny_scene: SceneSpec) -> Callable[..., Path]:
    """Writes a synthetic dataset under tmp_path and returns its directory."""

    def make_dataset_fn(name: str = "data", seed: int = 0, **overrides) -> Path:
        spec = tiny_scene.model_copy(update=overrides) if overrides else tiny_scene
        out = tmp_path / name
        generate_scene(spec, out, seed=seed)
        return out

    return make_dataset_fn


@pytest.fixture
def dataset(make_dataset) -> tuple[DatasetManifest, ImageCache, Path]:
    from geotrack.geo.dataset import ingest

    root = make_dataset()
    manifest, _ = ingest(root)
    return manifest, ImageCache(root), root


@pytest.fixture
def chdir_tmp(tmp_path: Path) -> Generator[Path, None, None]:
    cwd = os.getcwd()
    os.chdir(tmp_path)
    try:
        yield tmp_path
    finally:
        os.chdir(cwd)
