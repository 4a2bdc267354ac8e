"""
Role-labelled token sequences and the heading/flip operations on them.

A block boundary sequence is always `[patch x n, cls]`. Inside a block the
configured heading prefix (`avg` roles) sits in front of the patches.
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from adventurer import tensor as T
from adventurer.errors import ConfigError, ContractError, DimensionError
from adventurer.tensor import Tensor

logger = logging.getLogger(__name__)


class Role(str, Enum):
    AVG = "avg"
    PATCH = "patch"
    CLS = "cls"


@dataclass(frozen=True)
class TokenSequence:
    """
    An ordered [length x dim] activation block with a role per position.

    Attributes:
        data (Tensor): Activations, shape [len(roles), d].
        roles (Tuple[Role, ...]): One label per row.
    """

    data: Tensor
    roles: Tuple[Role, ...]

    def __post_init__(self):
        if self.data.ndim != 2 or self.data.shape[0] != len(self.roles):
            raise DimensionError(
                f"TokenSequence data {self.data.shape} does not match "
                f"{len(self.roles)} roles"
            )

    @classmethod
    def of_patches(cls, data: Tensor) -> "TokenSequence":
        return cls(data, (Role.PATCH,) * data.shape[0])

    @property
    def length(self) -> int:
        return len(self.roles)

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def num_heading(self) -> int:
        return sum(1 for r in self.roles if r is Role.AVG)

    @property
    def num_patches(self) -> int:
        return sum(1 for r in self.roles if r is Role.PATCH)

    def with_data(self, data: Tensor) -> "TokenSequence":
        """Same roles, new activations."""
        return TokenSequence(data, self.roles)

    def is_boundary(self) -> bool:
        """True when roles read exactly [patch x n, cls]."""
        return (
            self.length >= 1
            and self.roles[-1] is Role.CLS
            and all(r is Role.PATCH for r in self.roles[:-1])
        )


def append_cls(seq: TokenSequence, cls_token: Tensor) -> TokenSequence:
    """Place the class token after the patches."""
    data = T.concat([seq.data, cls_token], axis=0)
    return TokenSequence(data, seq.roles + (Role.CLS,))


def _require_boundary(seq: TokenSequence, op: str) -> None:
    if not seq.is_boundary():
        raise ContractError(
            f"{op} expects roles [patch x n, cls], got {_describe(seq.roles)}"
        )


def _describe(roles: Tuple[Role, ...]) -> str:
    counts = {r.value: sum(1 for x in roles if x is r) for r in Role}
    return f"{counts} over {len(roles)} positions"


def grid_pooling(n: int, grid_side: Tuple[int, int], cells: int, dtype) -> np.ndarray:
    """
    Averaging matrix [cells, n + 1] mapping a boundary sequence to cell means.

    Positions are read as a raster over the patch grid; the class token column
    is zero.

    Raises:
        ConfigError: If the grid cannot be cut into `cells` equal rectangles.
    """
    gh, gw = grid_side
    k = int(round(np.sqrt(cells)))
    if k * k != cells or gh * gw != n or gh % k or gw % k:
        raise ConfigError(
            f"Patch grid {gh}x{gw} cannot be divided into {cells} equal cells"
        )
    ch, cw = gh // k, gw // k
    pool = np.zeros((cells, n + 1), dtype=dtype)
    for t in range(n):
        i, j = divmod(t, gw)
        pool[(i // ch) * k + (j // cw), t] = 1.0 / (ch * cw)
    return pool


def make_heading(
    seq: TokenSequence,
    mode: str,
    *,
    heading_tokens: int = 1,
    grid_side: Optional[Tuple[int, int]] = None,
    learned_token: Optional[Tensor] = None,
) -> Optional[Tensor]:
    """
    Compute the heading rows for a boundary sequence, or None when mode is off.

    Args:
        seq: Sequence with roles [patch x n, cls].
        mode: average | grid | duplicate-cls | learnable | off.
        heading_tokens: Cell count N for grid mode.
        grid_side: Patch grid extents (rows, cols) for grid mode.
        learned_token: The [1, d] parameter for learnable mode.
    """
    _require_boundary(seq, "prepend_heading")
    if mode == "off":
        return None
    if mode == "average":
        # mean over patches and the class token
        return T.mean(seq.data, axis=0, keepdims=True)
    if mode == "grid":
        n = seq.num_patches
        if grid_side is None:
            side = int(round(np.sqrt(n)))
            grid_side = (side, side)
        pool = grid_pooling(n, grid_side, heading_tokens, seq.data.dtype)
        return T.matmul(Tensor(pool, dtype=pool.dtype), seq.data)
    if mode == "duplicate-cls":
        return T.slice_axis(seq.data, 0, seq.length - 1, seq.length)
    if mode == "learnable":
        if learned_token is None:
            raise ContractError("learnable heading needs a learned token")
        return learned_token
    raise ConfigError(f"Unknown heading mode {mode!r}")


def attach_heading(seq: TokenSequence, heading: Optional[Tensor]) -> TokenSequence:
    """Prepend precomputed heading rows."""
    if heading is None:
        return seq
    return TokenSequence(
        T.concat([heading, seq.data], axis=0),
        (Role.AVG,) * heading.shape[0] + seq.roles,
    )


def prepend_heading(
    seq: TokenSequence,
    mode: str,
    learned_token: Optional[Tensor] = None,
    *,
    heading_tokens: int = 1,
    grid_side: Optional[Tuple[int, int]] = None,
) -> TokenSequence:
    """Compute and prepend the heading prefix of `mode`."""
    heading = make_heading(
        seq,
        mode,
        heading_tokens=heading_tokens,
        grid_side=grid_side,
        learned_token=learned_token,
    )
    return attach_heading(seq, heading)


def drop_heading(seq: TokenSequence) -> TokenSequence:
    """Remove the avg-role prefix; a no-op when none is present."""
    k = seq.num_heading
    if k == 0:
        return seq
    if any(r is Role.AVG for r in seq.roles[k:]):
        raise ContractError("avg tokens must form a contiguous prefix")
    return TokenSequence(T.slice_axis(seq.data, 0, k, seq.length), seq.roles[k:])


def flip_patches(seq: TokenSequence) -> TokenSequence:
    """
    Reverse the patch positions and keep the class token last.

    Raises:
        ContractError: If a heading prefix is still present.
    """
    if seq.num_heading:
        raise ContractError("flip_patches is defined after the heading is dropped")
    _require_boundary(seq, "flip_patches")
    n = seq.length - 1
    patches = T.flip(T.slice_axis(seq.data, 0, 0, n), axis=0)
    cls_row = T.slice_axis(seq.data, 0, n, n + 1)
    return seq.with_data(T.concat([patches, cls_row], axis=0))


def reverse_patch_segment(seq: TokenSequence) -> TokenSequence:
    """Reverse only the patch span, leaving any heading prefix and the cls in place."""
    k, n = seq.num_heading, seq.num_patches
    parts = [
        T.slice_axis(seq.data, 0, 0, k),
        T.flip(T.slice_axis(seq.data, 0, k, k + n), axis=0),
        T.slice_axis(seq.data, 0, k + n, seq.length),
    ]
    return seq.with_data(T.concat([p for p in parts if p.shape[0]], axis=0))
