"""Per-token channel mixers: SwiGLU (2.5x hidden) or a plain GELU MLP (4x hidden)."""

from dataclasses import dataclass
from typing import Dict, Optional, Tuple

from adventurer import tensor as T
from adventurer.errors import ConfigError
from adventurer.layers.abc import ParamRecord, prefixed
from adventurer.layers.linear import Linear
from adventurer.rng import Rng
from adventurer.sequence import TokenSequence
from adventurer.tensor import Tensor

KINDS = ("swiglu", "plain-mlp", "none")
SWIGLU_RATIO = 2.5
MLP_RATIO = 4


def hidden_width(kind: str, dim: int) -> int:
    if kind == "swiglu":
        return int(SWIGLU_RATIO * dim)
    if kind == "plain-mlp":
        return MLP_RATIO * dim
    return 0


@dataclass
class ChannelMixerParams(ParamRecord):
    """
    Weights of one channel mixer.

    swiglu uses `gate`, `up` (d -> floor(2.5 d), no bias) and `down`;
    plain-mlp uses `up` (d -> 4 d) and `down` with biases; none holds nothing.
    """

    kind: str
    up: Optional[Linear] = None
    down: Optional[Linear] = None
    gate: Optional[Linear] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"channel mixer kind {self.kind!r} not in {KINDS}")

    @classmethod
    def init(cls, rng: Rng, kind: str, dim: int) -> "ChannelMixerParams":
        hidden = hidden_width(kind, dim)
        if kind == "swiglu":
            return cls(
                kind,
                up=Linear.init(rng.split("up"), dim, hidden, bias=False),
                down=Linear.init(rng.split("down"), hidden, dim, bias=False),
                gate=Linear.init(rng.split("gate"), dim, hidden, bias=False),
            )
        if kind == "plain-mlp":
            return cls(
                kind,
                up=Linear.init(rng.split("up"), dim, hidden),
                down=Linear.init(rng.split("down"), hidden, dim),
            )
        return cls(kind)

    @staticmethod
    def shapes(kind: str, dim: int) -> Dict[str, Tuple[int, ...]]:
        hidden = hidden_width(kind, dim)
        bias = kind == "plain-mlp"
        out: Dict[str, Tuple[int, ...]] = {}
        if kind == "none":
            return out
        if kind == "swiglu":
            out.update(prefixed("gate", Linear.shapes(dim, hidden, bias=False)))
        out.update(prefixed("up", Linear.shapes(dim, hidden, bias=bias)))
        out.update(prefixed("down", Linear.shapes(hidden, dim, bias=bias)))
        return out

    def named_tensors(self) -> Dict[str, Tensor]:
        out = {}
        for name in ("gate", "up", "down"):
            layer = getattr(self, name)
            if layer is not None:
                out.update(prefixed(name, layer.named_tensors()))
        return out


def channel_mixer_tensor(x: Tensor, params: ChannelMixerParams) -> Tensor:
    if params.kind == "none":
        return x
    if params.kind == "swiglu":
        return params.down(T.silu(params.gate(x)) * params.up(x))
    return params.down(T.gelu(params.up(x)))


def channel_mixer(seq: TokenSequence, params: ChannelMixerParams) -> TokenSequence:
    """Apply the mixer to every token independently; kind none returns `seq` itself."""
    if params.kind == "none":
        return seq
    return seq.with_data(channel_mixer_tensor(seq.data, params))
