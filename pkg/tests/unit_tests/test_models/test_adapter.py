import numpy as np
import pytest
from geotrack.core import Tensor, count_ops
from geotrack.errors import CapacityError, ShapeError, UsageError
from geotrack.models.adapter import (
    ALL,
    ASYM,
    CLS,
    AdapterConfig,
    AdapterState,
    UnifiedModel,
    adapted_block_forward,
    baseline1_video_embedding,
    encode_large_aerial,
    encode_video,
    temporal_self_attention,
    tile_image,
)
from geotrack.models.encoder import ViewEncoder, encode_batch, encode_image, make_config


@pytest.fixture
def encoder(tiny_encoder_config):
    return ViewEncoder(tiny_encoder_config, seed=5, view="street").freeze()


@pytest.fixture
def frames(rng, tiny_encoder_config):
    size = tiny_encoder_config.image_size
    return rng.uniform(0, 1, size=(4, size, size, 3)).astype(np.float32)


def _perturbed(model, rng):
    for _, p in model.state.named_parameters():
        p.data = p.data + rng.normal(0, 0.3, size=p.shape).astype(p.dtype)
    return model


@pytest.mark.parametrize("variant", [CLS, ALL, ASYM])
def test_adapters_are_identity_at_init(encoder, frames, tiny_adapter_config, variant):
    config = tiny_adapter_config.model_copy(update={"variant": variant})
    model = UnifiedModel(encoder, AdapterState(encoder, config, seed=1))
    np.testing.assert_allclose(model.frame_embeddings(frames).data, encode_batch(encoder, frames), atol=1e-5)


def test_single_frame_video_equals_image_embedding(encoder, frames):
    model = UnifiedModel(encoder)
    np.testing.assert_allclose(encode_video(model, frames[:1]), encode_image(encoder, frames[0]), atol=1e-5)


def test_video_embedding_is_unit_norm(encoder, frames, tiny_adapter_config, rng):
    model = _perturbed(UnifiedModel(encoder, AdapterState(encoder, tiny_adapter_config)), rng)
    out = encode_video(model, frames)
    assert out.shape == (encoder.config.embed_dim,)
    assert np.linalg.norm(out) == pytest.approx(1.0, abs=1e-5)


def test_stride_keeps_every_other_frame(encoder, frames, tiny_adapter_config, rng):
    model = _perturbed(UnifiedModel(encoder, AdapterState(encoder, tiny_adapter_config)), rng)
    np.testing.assert_allclose(encode_video(model, frames, stride=2), encode_video(model, frames[::2]), atol=1e-6)
    with pytest.raises(UsageError):
        encode_video(model, frames, stride=0)


def test_cls_variant_leaves_patch_tokens_alone(rng, encoder):
    attn = encoder.blocks[0].attn
    tokens = Tensor(rng.normal(size=(3, 5, encoder.config.model_dim)))
    out = temporal_self_attention(tokens, CLS, attn.params(), attn.heads)
    np.testing.assert_array_equal(out.data[:, 1:], tokens.data[:, 1:])
    assert not np.allclose(out.data[:, 0], tokens.data[:, 0])


def test_cls_variant_is_cheaper_than_all(rng, encoder):
    attn = encoder.blocks[0].attn
    tokens = Tensor(rng.normal(size=(4, 5, encoder.config.model_dim)))
    with count_ops() as cls_ops:
        temporal_self_attention(tokens, CLS, attn.params(), attn.heads)
    with count_ops() as all_ops:
        temporal_self_attention(tokens, ALL, attn.params(), attn.heads)
    assert cls_ops.flops < all_ops.flops


def test_cls_variant_costs_under_one_patch_share_of_all(rng, encoder):
    frames, patches = 8, 16
    attn = encoder.blocks[0].attn
    tokens = Tensor(rng.normal(size=(frames, 1 + patches, encoder.config.model_dim)))
    with count_ops() as cls_ops:
        temporal_self_attention(tokens, CLS, attn.params(), attn.heads)
    with count_ops() as all_ops:
        temporal_self_attention(tokens, ALL, attn.params(), attn.heads)
    assert cls_ops.flops * patches < all_ops.flops


def test_all_variant_mixes_patch_tokens_across_frames(rng, encoder):
    attn = encoder.blocks[0].attn
    tokens = rng.normal(size=(3, 5, encoder.config.model_dim))
    changed = tokens.copy()
    changed[2, 3] += 1.0
    a = temporal_self_attention(Tensor(tokens), ALL, attn.params(), attn.heads)
    b = temporal_self_attention(Tensor(changed), ALL, attn.params(), attn.heads)
    assert not np.allclose(a.data[0, 3], b.data[0, 3])
    np.testing.assert_allclose(a.data[0, 2], b.data[0, 2], atol=1e-6)


def test_unknown_variant(rng, encoder):
    attn = encoder.blocks[0].attn
    with pytest.raises(UsageError):
        temporal_self_attention(Tensor(rng.normal(size=(2, 3, 16))), "diagonal", attn.params(), attn.heads)
    with pytest.raises(UsageError):
        make_config(AdapterConfig, {"variant": "diagonal"})


def test_asym_resolves_per_view():
    config = AdapterConfig(variant=ASYM)
    assert config.for_view("aerial") == CLS
    assert config.for_view("street") == ALL


def test_too_many_frames(encoder, tiny_encoder_config, rng):
    model = UnifiedModel(encoder, AdapterState(encoder, AdapterConfig(t_max=2)))
    size = tiny_encoder_config.image_size
    with pytest.raises(CapacityError):
        encode_video(model, rng.uniform(size=(3, size, size, 3)))


def test_adapter_count_must_match_blocks(encoder, tiny_encoder_config):
    other = ViewEncoder(tiny_encoder_config.model_copy(update={"depth": 1}), view="street")
    with pytest.raises(ShapeError):
        UnifiedModel(encoder, AdapterState(other))


def test_only_adapters_receive_gradients(encoder, frames, tiny_adapter_config):
    model = UnifiedModel(encoder, AdapterState(encoder, tiny_adapter_config))
    out = model(frames)
    (out * Tensor(np.ones(out.shape))).sum().backward()
    assert all(p.grad is None for _, p in encoder.named_parameters())
    assert any(p.grad is not None and np.any(p.grad) for _, p in model.state.named_parameters())


def test_tile_image_is_row_major():
    image = np.zeros((4, 6, 3), dtype=np.float32)
    image[0:2, 2:4] = 1.0
    tiles = tile_image(image, 2)
    assert tiles.shape == (6, 2, 2, 3)
    assert tiles[1].min() == 1.0
    assert tiles[0].max() == 0.0
    with pytest.raises(ShapeError):
        tile_image(image, 4)


def test_large_aerial_is_a_video_of_tiles(tiny_encoder_config, rng):
    aerial = ViewEncoder(tiny_encoder_config, seed=6, view="aerial").freeze()
    model = UnifiedModel(aerial)
    size = tiny_encoder_config.image_size
    large = rng.uniform(size=(2 * size, 2 * size, 3)).astype(np.float32)
    np.testing.assert_allclose(encode_large_aerial(model, large), encode_video(model, tile_image(large, size)), atol=1e-6)


def test_baseline_mean_pool(encoder, frames):
    pooled = baseline1_video_embedding(encoder, frames)
    expected = encode_batch(encoder, frames).mean(axis=0)
    np.testing.assert_allclose(pooled, expected / np.linalg.norm(expected), atol=1e-5)


def test_adapted_block_at_init_is_the_plain_block(encoder, tiny_adapter_config, rng):
    state = AdapterState(encoder, tiny_adapter_config, seed=2)
    block, adapter = encoder.blocks[0], state.adapters[0]
    tokens = (encoder.config.image_size // encoder.config.patch_size) ** 2 + 1
    h = Tensor(rng.normal(size=(3, tokens, encoder.config.model_dim)).astype(np.float32))
    np.testing.assert_allclose(adapted_block_forward(h, block, adapter, CLS).data, block(h).data, atol=1e-5)
    with pytest.raises(ShapeError):
        adapted_block_forward(Tensor(np.zeros((tokens, encoder.config.model_dim))), block, adapter, CLS)
