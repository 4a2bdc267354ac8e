from adventurer import tensor as T
from adventurer.errors import ContractError
from adventurer.sequence import TokenSequence
from adventurer.tensor import Tensor


def rms_norm_tensor(x: Tensor, scale: Tensor, eps: float) -> Tensor:
    """Normalize the last axis of `x` by its root mean square."""
    if eps <= 0:
        raise ContractError(f"rms_norm needs eps > 0, got {eps}")
    ms = T.mean(x * x, axis=-1, keepdims=True)
    return x * T.rsqrt(ms + eps) * scale


def rms_norm(seq: TokenSequence, scale: Tensor, eps: float = 1e-5) -> TokenSequence:
    """Per-token x * scale / sqrt(mean(x^2) + eps)."""
    return seq.with_data(rms_norm_tensor(seq.data, scale, eps))
