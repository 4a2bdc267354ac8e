from abc import ABC, abstractmethod
from typing import Dict

from adventurer.tensor import Tensor


class ParamRecord(ABC):
    """A named group of learnable tensors belonging to one layer."""

    @abstractmethod
    def named_tensors(self) -> Dict[str, Tensor]:
        """Return the learnable tensors of this record keyed by local name."""
        pass

    def parameters(self):
        return list(self.named_tensors().values())

    def num_params(self) -> int:
        return sum(t.size for t in self.named_tensors().values())


def prefixed(prefix: str, tensors: Dict[str, Tensor]) -> Dict[str, Tensor]:
    return {f"{prefix}.{name}": t for name, t in tensors.items()}
