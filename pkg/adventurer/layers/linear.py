from dataclasses import dataclass
from typing import Dict, Optional, Tuple

import numpy as np

from adventurer import tensor as T
from adventurer.layers.abc import ParamRecord
from adventurer.rng import Rng
from adventurer.tensor import Tensor


@dataclass
class Linear(ParamRecord):
    """x @ weight (+ bias); weight is stored [in, out]."""

    weight: Tensor
    bias: Optional[Tensor] = None

    @classmethod
    def init(cls, rng: Rng, d_in: int, d_out: int, bias: bool = True) -> "Linear":
        weight = Tensor(rng.truncated_normal((d_in, d_out)), requires_grad=True)
        b = Tensor(np.zeros(d_out), requires_grad=True) if bias else None
        return cls(weight, b)

    @staticmethod
    def shapes(d_in: int, d_out: int, bias: bool = True) -> Dict[str, Tuple[int, ...]]:
        out = {"weight": (d_in, d_out)}
        if bias:
            out["bias"] = (d_out,)
        return out

    def named_tensors(self) -> Dict[str, Tensor]:
        out = {"weight": self.weight}
        if self.bias is not None:
            out["bias"] = self.bias
        return out

    def __call__(self, x: Tensor) -> Tensor:
        y = T.matmul(x, self.weight)
        return y if self.bias is None else y + self.bias
