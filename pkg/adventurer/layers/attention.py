"""Multi-head self-attention with a causal (lower-triangular) or full mask."""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from adventurer import tensor as T
from adventurer.errors import ConfigError, DimensionError
from adventurer.layers.abc import ParamRecord, prefixed
from adventurer.layers.linear import Linear
from adventurer.rng import Rng
from adventurer.sequence import TokenSequence
from adventurer.tensor import Tensor

MASK_MODES = ("causal", "full")


@dataclass
class AttnLayerParams(ParamRecord):
    """
    Projections of one attention token mixer.

    Attributes:
        q, k, v (Linear): d -> d projections, split across `n_heads` heads.
        out (Linear): d -> d output projection.
        n_heads (int): Head count; must divide d.
        mask_mode (str): causal | full.
    """

    q: Linear
    k: Linear
    v: Linear
    out: Linear
    n_heads: int
    mask_mode: str = "causal"

    def __post_init__(self):
        d = self.q.weight.shape[0]
        if d % self.n_heads:
            raise ConfigError(f"dim {d} is not divisible by {self.n_heads} heads")
        if self.mask_mode not in MASK_MODES:
            raise ConfigError(f"mask_mode {self.mask_mode!r} not in {MASK_MODES}")

    @classmethod
    def init(
        cls, rng: Rng, dim: int, n_heads: int, mask_mode: str = "causal"
    ) -> "AttnLayerParams":
        return cls(
            q=Linear.init(rng.split("q"), dim, dim),
            k=Linear.init(rng.split("k"), dim, dim),
            v=Linear.init(rng.split("v"), dim, dim),
            out=Linear.init(rng.split("out"), dim, dim),
            n_heads=n_heads,
            mask_mode=mask_mode,
        )

    @staticmethod
    def shapes(dim: int) -> Dict[str, Tuple[int, ...]]:
        out = {}
        for name in ("q", "k", "v", "out"):
            out.update(prefixed(name, Linear.shapes(dim, dim)))
        return out

    def named_tensors(self) -> Dict[str, Tensor]:
        out = {}
        for name in ("q", "k", "v", "out"):
            out.update(prefixed(name, getattr(self, name).named_tensors()))
        return out


def causal_mask(length: int) -> np.ndarray:
    """Visibility [L, L]: position t sees positions 0..t."""
    return np.tril(np.ones((length, length), dtype=bool))


def attention_tensor(x: Tensor, params: AttnLayerParams) -> Tensor:
    """Attention over rows of `x` [L, d]."""
    if x.ndim != 2 or x.shape[0] < 1:
        raise DimensionError(f"attention expects [L, d] with L >= 1, got {x.shape}")
    length, d = x.shape
    h = params.n_heads
    dh = d // h

    def heads(t: Tensor, axes) -> Tensor:
        return T.transpose(T.reshape(t, (length, h, dh)), axes)

    q = heads(params.q(x), (1, 0, 2))  # [H, L, dh]
    k = heads(params.k(x), (1, 2, 0))  # [H, dh, L]
    v = heads(params.v(x), (1, 0, 2))  # [H, L, dh]
    scores = T.matmul(q, k) * (1.0 / float(np.sqrt(dh)))
    where = causal_mask(length) if params.mask_mode == "causal" else None
    probs = T.softmax(scores, axis=-1, where=where)
    ctx = T.reshape(T.transpose(T.matmul(probs, v), (1, 0, 2)), (length, d))
    return params.out(ctx)


def causal_attention(seq: TokenSequence, params: AttnLayerParams) -> TokenSequence:
    """
    Token mixing by masked softmax attention.

    In causal mode position t attends to positions 0..t only; full mode is the
    unmasked baseline.
    """
    return seq.with_data(attention_tensor(seq.data, params))
