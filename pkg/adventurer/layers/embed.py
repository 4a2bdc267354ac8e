from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from adventurer import tensor as T
from adventurer.errors import DimensionError
from adventurer.layers.abc import ParamRecord
from adventurer.rng import Rng
from adventurer.sequence import TokenSequence
from adventurer.tensor import Tensor


@dataclass
class PatchEmbedParams(ParamRecord):
    """
    Linear map from flattened p x p patches to d-wide tokens.

    Attributes:
        patch_size (int): Patch edge p.
        weight (Tensor): [(channels * p * p), d].
        bias (Tensor): [d].
    """

    patch_size: int
    weight: Tensor
    bias: Tensor

    @classmethod
    def init(
        cls, rng: Rng, patch_size: int, channels: int, dim: int
    ) -> "PatchEmbedParams":
        fan_in = channels * patch_size * patch_size
        return cls(
            patch_size,
            Tensor(rng.truncated_normal((fan_in, dim)), requires_grad=True),
            Tensor(np.zeros(dim), requires_grad=True),
        )

    @staticmethod
    def shapes(patch_size: int, channels: int, dim: int) -> Dict[str, Tuple[int, ...]]:
        return {"weight": (channels * patch_size * patch_size, dim), "bias": (dim,)}

    def named_tensors(self) -> Dict[str, Tensor]:
        return {"weight": self.weight, "bias": self.bias}


@dataclass
class PositionalEmbedding(ParamRecord):
    """Learnable table [(n + 1) x d], the last row belonging to the class token."""

    table: Tensor

    @classmethod
    def init(cls, rng: Rng, num_patches: int, dim: int) -> "PositionalEmbedding":
        table = rng.truncated_normal((num_patches + 1, dim))
        return cls(Tensor(table, requires_grad=True))

    def named_tensors(self) -> Dict[str, Tensor]:
        return {"table": self.table}


def patchify(image: Tensor, params: PatchEmbedParams) -> TokenSequence:
    """
    Cut an image into raster-ordered patches and embed each one.

    Args:
        image (Tensor): [channels, h, w].
        params (PatchEmbedParams): The embedding weights.

    Returns:
        TokenSequence: n = h * w / p^2 patch tokens.

    Raises:
        DimensionError: If h or w is not a multiple of p.
    """
    patches = T.unfold_patches(image, params.patch_size)
    if patches.shape[1] != params.weight.shape[0]:
        raise DimensionError(
            f"Patch width {patches.shape[1]} does not match "
            f"embedding {params.weight.shape}"
        )
    return TokenSequence.of_patches(T.matmul(patches, params.weight) + params.bias)


def add_positional(seq: TokenSequence, pos: PositionalEmbedding) -> TokenSequence:
    if pos.table.shape != seq.data.shape:
        raise DimensionError(
            f"Positional table {pos.table.shape} does not match "
            f"sequence {seq.data.shape}"
        )
    return seq.with_data(seq.data + pos.table)
