from adventurer.layers.attention import AttnLayerParams, causal_attention
from adventurer.layers.embed import PatchEmbedParams, PositionalEmbedding, patchify
from adventurer.layers.linear import Linear
from adventurer.layers.mlp import ChannelMixerParams, channel_mixer
from adventurer.layers.norm import rms_norm
from adventurer.layers.ssd import (
    SsdLayerParams,
    mamba2_mixer,
    ssd_scan_chunked,
    ssd_scan_recurrent,
)

__all__ = [
    "AttnLayerParams",
    "ChannelMixerParams",
    "Linear",
    "PatchEmbedParams",
    "PositionalEmbedding",
    "SsdLayerParams",
    "causal_attention",
    "channel_mixer",
    "mamba2_mixer",
    "patchify",
    "rms_norm",
    "ssd_scan_chunked",
    "ssd_scan_recurrent",
]
