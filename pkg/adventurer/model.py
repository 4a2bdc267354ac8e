"""
Adventurer assembly: patch tokens, class token at the end, per-block heading
prefix, residual token and channel mixers, and inter-layer flipping.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from adventurer import tensor as T
from adventurer.config import ModelConfig
from adventurer.errors import CheckpointShapeError, ContractError
from adventurer.layers.abc import ParamRecord, prefixed
from adventurer.layers.attention import AttnLayerParams, attention_tensor
from adventurer.layers.embed import (
    PatchEmbedParams,
    PositionalEmbedding,
    add_positional,
    patchify,
)
from adventurer.layers.linear import Linear
from adventurer.layers.mlp import ChannelMixerParams, channel_mixer_tensor
from adventurer.layers.norm import rms_norm_tensor
from adventurer.layers.ssd import SsdLayerParams, mamba2_tensor
from adventurer.rng import Rng
from adventurer.sequence import (
    TokenSequence,
    append_cls,
    attach_heading,
    drop_heading,
    flip_patches,
    make_heading,
    reverse_patch_segment,
)
from adventurer.tensor import Tensor

logger = logging.getLogger(__name__)

TokenMixer = Union[SsdLayerParams, AttnLayerParams]
Observer = Callable[[str, int, TokenSequence], None]


@dataclass
class BlockParams(ParamRecord):
    """
    One block: a token mixer, then a channel mixer.

    When the channel mixer kind is none, `second_mixer` (another token mixer)
    takes the channel slot, giving the doubled-mixer arrangement.
    """

    token_mixer: TokenMixer
    channel_mixer: ChannelMixerParams
    second_mixer: Optional[TokenMixer] = None
    norm1: Optional[Tensor] = None
    norm2: Optional[Tensor] = None

    def named_tensors(self) -> Dict[str, Tensor]:
        out = prefixed("token_mixer", self.token_mixer.named_tensors())
        out.update(prefixed("channel_mixer", self.channel_mixer.named_tensors()))
        if self.second_mixer is not None:
            out.update(prefixed("second_mixer", self.second_mixer.named_tensors()))
        if self.norm1 is not None:
            out["norm1"] = self.norm1
            out["norm2"] = self.norm2
        return out


@dataclass
class AdventurerParams(ParamRecord):
    patch_embed: PatchEmbedParams
    pos_embed: PositionalEmbedding
    cls_token: Tensor
    head: Linear
    blocks: List[BlockParams] = field(default_factory=list)
    norm_f: Optional[Tensor] = None
    heading_token: Optional[Tensor] = None

    def named_tensors(self) -> Dict[str, Tensor]:
        out = prefixed("patch_embed", self.patch_embed.named_tensors())
        out.update(prefixed("pos_embed", self.pos_embed.named_tensors()))
        out["cls_token"] = self.cls_token
        if self.heading_token is not None:
            out["heading_token"] = self.heading_token
        for i, block in enumerate(self.blocks):
            out.update(prefixed(f"blocks.{i}", block.named_tensors()))
        if self.norm_f is not None:
            out["norm_f"] = self.norm_f
        out.update(prefixed("head", self.head.named_tensors()))
        return out

    def zero_grad(self) -> None:
        for t in self.parameters():
            t.zero_grad()


# --- Construction ---
def _mixer_shapes(cfg: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    if cfg.token_mixer == "mamba2":
        conv1d = cfg.conv1d == "on"
        return SsdLayerParams.shapes(cfg.dim, cfg.d_state, cfg.head_dim, conv1d)
    return AttnLayerParams.shapes(cfg.dim)


def _init_mixer(rng: Rng, cfg: ModelConfig) -> TokenMixer:
    if cfg.token_mixer == "mamba2":
        return SsdLayerParams.init(
            rng,
            cfg.dim,
            cfg.d_state,
            cfg.head_dim,
            conv1d=cfg.conv1d == "on",
            scan_impl=cfg.scan_impl,
            chunk_len=cfg.chunk_len,
        )
    mask = "causal" if cfg.token_mixer == "causal-attn" else "full"
    return AttnLayerParams.init(rng, cfg.dim, cfg.n_attn_heads, mask)


def param_shapes(cfg: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Name -> shape of every learnable tensor, in `named_tensors` order."""
    d = cfg.dim
    out = prefixed(
        "patch_embed", PatchEmbedParams.shapes(cfg.patch_size, cfg.in_channels, d)
    )
    out["pos_embed.table"] = (cfg.num_patches + 1, d)
    out["cls_token"] = (1, d)
    if cfg.heading == "learnable":
        out["heading_token"] = (1, d)
    for i in range(cfg.depth):
        block = prefixed("token_mixer", _mixer_shapes(cfg))
        mixer = ChannelMixerParams.shapes(cfg.channel_mixer, d)
        block.update(prefixed("channel_mixer", mixer))
        if cfg.channel_mixer == "none":
            block.update(prefixed("second_mixer", _mixer_shapes(cfg)))
        if cfg.norm == "rms":
            block["norm1"] = (d,)
            block["norm2"] = (d,)
        out.update(prefixed(f"blocks.{i}", block))
    if cfg.norm == "rms":
        out["norm_f"] = (d,)
    out.update(prefixed("head", Linear.shapes(d, cfg.num_classes)))
    return out


def count_params(cfg: ModelConfig) -> int:
    """Exact number of learnable scalars of the configured model."""
    return sum(int(np.prod(s)) for s in param_shapes(cfg).values())


def init_params(cfg: ModelConfig, seed: int = 0) -> AdventurerParams:
    """
    Draw a fresh parameter set; every tensor uses truncated-normal std 0.02
    unless its layer states otherwise.
    """
    rng = Rng(seed).split("params")
    d = cfg.dim

    def scale() -> Optional[Tensor]:
        return Tensor(np.ones(d), requires_grad=True) if cfg.norm == "rms" else None

    blocks = []
    for i in range(cfg.depth):
        block_rng = rng.split(f"blocks.{i}")
        second = None
        if cfg.channel_mixer == "none":
            second = _init_mixer(block_rng.split("second_mixer"), cfg)
        blocks.append(
            BlockParams(
                token_mixer=_init_mixer(block_rng.split("token_mixer"), cfg),
                channel_mixer=ChannelMixerParams.init(
                    block_rng.split("channel_mixer"), cfg.channel_mixer, d
                ),
                second_mixer=second,
                norm1=scale(),
                norm2=scale(),
            )
        )
    heading_token = None
    if cfg.heading == "learnable":
        token = rng.split("heading_token").truncated_normal((1, d))
        heading_token = Tensor(token, requires_grad=True)
    params = AdventurerParams(
        patch_embed=PatchEmbedParams.init(
            rng.split("patch_embed"), cfg.patch_size, cfg.in_channels, d
        ),
        pos_embed=PositionalEmbedding.init(rng.split("pos_embed"), cfg.num_patches, d),
        cls_token=Tensor(
            rng.split("cls_token").truncated_normal((1, d)), requires_grad=True
        ),
        head=Linear.init(rng.split("head"), d, cfg.num_classes),
        blocks=blocks,
        norm_f=scale(),
        heading_token=heading_token,
    )
    logger.debug(f"Initialized {params.num_params()} parameters with seed {seed}")
    return params


def assign_state(params: AdventurerParams, state: Dict[str, np.ndarray]) -> None:
    """
    Overwrite every parameter with the array of the same name.

    Raises:
        CheckpointShapeError: On missing, extra or differently shaped tensors.
    """
    named = params.named_tensors()
    missing = sorted(set(named) - set(state))
    extra = sorted(set(state) - set(named))
    if missing or extra:
        raise CheckpointShapeError(
            f"Tensor names differ: missing {missing}, unexpected {extra}"
        )
    for name, t in named.items():
        arr = np.asarray(state[name])
        if arr.shape != t.shape:
            raise CheckpointShapeError(
                f"{name}: stored {arr.shape}, config expects {t.shape}"
            )
        t.data = np.ascontiguousarray(arr, dtype=t.dtype)


def cast_params(params: AdventurerParams, cfg: ModelConfig, dtype) -> AdventurerParams:
    """A copy of `params` whose tensors hold `dtype` values."""
    clone = init_params(cfg)
    assign_state(clone, {k: v.data for k, v in params.named_tensors().items()})
    for t in clone.parameters():
        t.data = t.data.astype(dtype)
    return clone


# --- Forward ---
def _notify(observer: Optional[Observer], event: str, index: int, seq: TokenSequence):
    if observer is not None:
        observer(event, index, seq)


def _pre_norm(x: Tensor, scale: Optional[Tensor], cfg: ModelConfig) -> Tensor:
    return x if scale is None else rms_norm_tensor(x, scale, cfg.norm_eps)


def _mix(x: Tensor, mixer: TokenMixer) -> Tensor:
    if isinstance(mixer, SsdLayerParams):
        return mamba2_tensor(x, mixer)
    return attention_tensor(x, mixer)


def token_mixer_residual(
    seq: TokenSequence, mixer: TokenMixer, scale: Optional[Tensor], cfg: ModelConfig
) -> Tensor:
    """Token-mixer output for `seq` (before the residual add)."""
    normed = seq.with_data(_pre_norm(seq.data, scale, cfg))
    forward = _mix(normed.data, mixer)
    if cfg.scan != "per-layer-bidirectional":
        return forward
    reversed_seq = reverse_patch_segment(normed)
    backward_mixed = reversed_seq.with_data(_mix(reversed_seq.data, mixer))
    backward_out = reverse_patch_segment(backward_mixed)
    return (forward + backward_out.data) * 0.5


def adventurer_block(
    seq: TokenSequence,
    block: BlockParams,
    cfg: ModelConfig,
    *,
    index: int = 0,
    frozen_heading: Optional[Tensor] = None,
    learned_token: Optional[Tensor] = None,
    observer: Optional[Observer] = None,
) -> TokenSequence:
    """
    One block: heading prefix, residual token mixer, residual channel mixer,
    heading drop, then the patch flip when inter-layer flipping is on.

    Args:
        seq: Boundary sequence [patch x n, cls].
        block: The block's weights.
        cfg: Model configuration.
        index: Block position, reported to `observer`.
        frozen_heading: Heading rows to reuse when recalc_heading is off.
        learned_token: Parameter vector for the learnable heading mode.
        observer: Optional callback receiving ("mixer_input", index, sequence).
    """
    if not seq.is_boundary():
        raise ContractError(f"Block {index} input roles are not [patch x n, cls]")
    if cfg.recalc_heading or frozen_heading is None:
        heading = make_heading(
            seq,
            cfg.heading,
            heading_tokens=cfg.heading_tokens,
            grid_side=(cfg.grid_side, cfg.grid_side),
            learned_token=learned_token,
        )
    else:
        heading = frozen_heading
    x = attach_heading(seq, heading)
    _notify(observer, "mixer_input", index, x)
    mixed = token_mixer_residual(x, block.token_mixer, block.norm1, cfg)
    x = x.with_data(x.data + mixed)
    if block.second_mixer is not None:
        mixed = token_mixer_residual(x, block.second_mixer, block.norm2, cfg)
        x = x.with_data(x.data + mixed)
    elif block.channel_mixer.kind != "none":
        normed = _pre_norm(x.data, block.norm2, cfg)
        x = x.with_data(x.data + channel_mixer_tensor(normed, block.channel_mixer))
    x = drop_heading(x)
    if cfg.flip == "inter-layer" and cfg.scan == "one-way":
        x = flip_patches(x)
    return x


def _as_image(image) -> Tensor:
    return image if isinstance(image, Tensor) else Tensor(image)


def forward_features(
    image,
    params: AdventurerParams,
    cfg: ModelConfig,
    *,
    observer: Optional[Observer] = None,
) -> TokenSequence:
    """
    Patchify, append the class token, add positions, run every block.

    Returns the final [n + 1, d] sequence. After an odd number of flipping
    blocks the patch order is reversed; the class token is always last.
    """
    seq = patchify(_as_image(image), params.patch_embed)
    seq = add_positional(append_cls(seq, params.cls_token), params.pos_embed)
    frozen = None
    if not cfg.recalc_heading:
        frozen = make_heading(
            seq,
            cfg.heading,
            heading_tokens=cfg.heading_tokens,
            grid_side=(cfg.grid_side, cfg.grid_side),
            learned_token=params.heading_token,
        )
    for i, block in enumerate(params.blocks):
        _notify(observer, "block_input", i, seq)
        seq = adventurer_block(
            seq,
            block,
            cfg,
            index=i,
            frozen_heading=frozen,
            learned_token=params.heading_token,
            observer=observer,
        )
    _notify(observer, "output", len(params.blocks), seq)
    if not seq.is_boundary():
        raise ContractError("Final sequence roles are not [patch x n, cls]")
    return seq


def classify(
    image,
    params: AdventurerParams,
    cfg: ModelConfig,
    *,
    observer: Optional[Observer] = None,
) -> Tensor:
    """Logits [num_classes] from the final class token."""
    feats = forward_features(image, params, cfg, observer=observer)
    length = feats.length
    cls_row = T.slice_axis(feats.data, 0, length - 1, length)
    if params.norm_f is not None:
        cls_row = rms_norm_tensor(cls_row, params.norm_f, cfg.norm_eps)
    return T.reshape(params.head(cls_row), (cfg.num_classes,))


def fingerprint(cfg: ModelConfig, seed: int = 0) -> Tuple[str, int]:
    """Op-count fingerprint and MAC total of one forward pass."""
    params = init_params(cfg, seed)
    image = Rng(seed).split("fingerprint").normal(
        (cfg.in_channels, cfg.image_size, cfg.image_size)
    )
    with T.no_grad(), T.count_ops() as counter:
        classify(image, params, cfg)
    return counter.fingerprint(), counter.macs
