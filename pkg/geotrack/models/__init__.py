"""View encoders, GeoAdapters and the TransRetriever."""

from .adapter import (
    AdapterConfig,
    AdapterState,
    GeoAdapter,
    UnifiedModel,
    adapted_block_forward,
    baseline1_video_embedding,
    encode_large_aerial,
    encode_video,
    pool_frames,
    temporal_self_attention,
    tile_image,
)
from .encoder import EncoderConfig, ViewEncoder, encode_batch, encode_image, make_config, patchify, unpatchify
from .retriever import EncodedSets, RetrieverConfig, TransRetriever, decode_step, encode_sets, greedy_decode

__all__ = [
    "AdapterConfig",
    "AdapterState",
    "EncodedSets",
    "EncoderConfig",
    "GeoAdapter",
    "RetrieverConfig",
    "TransRetriever",
    "UnifiedModel",
    "ViewEncoder",
    "adapted_block_forward",
    "baseline1_video_embedding",
    "decode_step",
    "encode_batch",
    "encode_image",
    "encode_large_aerial",
    "encode_sets",
    "encode_video",
    "greedy_decode",
    "make_config",
    "patchify",
    "pool_frames",
    "temporal_self_attention",
    "tile_image",
    "unpatchify",
]
