"""Plain SGD training with cosine learning-rate decay on a `ToyDataset`."""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from adventurer import tensor as T
from adventurer.config import ModelConfig
from adventurer.errors import ConfigError, NonFiniteError
from adventurer.harness.data import ToyDataset
from adventurer.model import AdventurerParams, classify, init_params
from adventurer.rng import Rng
from adventurer.tensor import Tensor

logger = logging.getLogger(__name__)

DEFAULT_STEPS = 500
DEFAULT_LR = 0.1


@dataclass
class TrainTrace:
    """
    Attributes:
        losses (List[float]): Loss before each update.
        lrs (List[float]): Learning rate applied at each step.
        final_accuracy (float): Train accuracy after the last update.
        params (AdventurerParams): Trained parameters.
    """

    losses: List[float] = field(default_factory=list)
    lrs: List[float] = field(default_factory=list)
    final_accuracy: float = 0.0
    params: Optional[AdventurerParams] = None

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def cosine_lr(step: int, steps: int, base_lr: float) -> float:
    """Cosine decay from `base_lr` at step 0 towards 0 at `steps`."""
    return 0.5 * base_lr * (1.0 + math.cos(math.pi * step / max(steps, 1)))


def batch_logits(
    images: np.ndarray, params: AdventurerParams, cfg: ModelConfig
) -> Tensor:
    """Stack per-image logits into [batch, num_classes]."""
    rows = [
        T.reshape(classify(img, params, cfg), (1, cfg.num_classes)) for img in images
    ]
    return T.concat(rows, axis=0)


def accuracy(data: ToyDataset, params: AdventurerParams, cfg: ModelConfig) -> float:
    with T.no_grad():
        logits = batch_logits(data.images, params, cfg).data
    return float(np.mean(np.argmax(logits, axis=1) == data.labels))


def _check_finite(name: str, values: np.ndarray, step: int) -> None:
    if not np.all(np.isfinite(values)):
        raise NonFiniteError(name, step)


def _check_compatible(cfg: ModelConfig, data: ToyDataset) -> None:
    if cfg.num_classes != data.num_classes:
        raise ConfigError(
            f"Config has {cfg.num_classes} classes, dataset has {data.num_classes}"
        )
    expected = (cfg.in_channels, cfg.image_size, cfg.image_size)
    if tuple(data.images.shape[1:]) != expected:
        raise ConfigError(
            f"Dataset images {data.images.shape[1:]} do not match config {expected}"
        )


def _batches(
    n: int, batch_size: Optional[int], rng: Rng, steps: int
) -> List[np.ndarray]:
    if batch_size is None or batch_size >= n:
        return [np.arange(n)] * steps
    out: List[np.ndarray] = []
    order: Sequence[int] = []
    while len(out) < steps:
        if len(order) < batch_size:
            order = rng.permutation(n)
        out.append(np.sort(np.asarray(order[:batch_size])))
        order = order[batch_size:]
    return out


def train_toy(
    cfg: ModelConfig,
    data: ToyDataset,
    steps: int = DEFAULT_STEPS,
    lr: float = DEFAULT_LR,
    *,
    seed: int = 0,
    batch_size: Optional[int] = None,
) -> TrainTrace:
    """
    Train a freshly initialized model with cross-entropy on the class-token logits.

    Args:
        cfg: Model configuration; `num_classes` must match the dataset.
        data: Training images and labels.
        steps: Number of parameter updates.
        lr: Peak learning rate of the cosine schedule.
        seed: Initialization and batch-order seed.
        batch_size: Images per step; the full set when None.

    Returns:
        TrainTrace: Per-step losses and learning rates, final accuracy and parameters.

    Raises:
        ConfigError: If the config does not fit the dataset.
        NonFiniteError: Naming the first tensor that holds NaN or Inf.
    """
    _check_compatible(cfg, data)
    params = init_params(cfg, seed)
    named = params.named_tensors()
    batches = _batches(len(data), batch_size, Rng(seed).split("batches"), steps)
    trace = TrainTrace(params=params)
    logger.info(
        f"Training {params.num_params()} parameters for {steps} steps at lr {lr}"
    )

    for step, idx in enumerate(batches):
        lr_t = cosine_lr(step, steps, lr)
        params.zero_grad()
        logits = batch_logits(data.images[idx], params, cfg)
        _check_finite("logits", logits.data, step)
        loss = T.cross_entropy(logits, data.labels[idx])
        _check_finite("loss", loss.data, step)
        T.backward(loss)
        for name, p in named.items():
            if p.grad is not None:
                _check_finite(f"{name}.grad", p.grad, step)
        for p in named.values():
            if p.grad is not None:
                p.data = (p.data - lr_t * p.grad).astype(p.dtype)
        trace.losses.append(loss.item())
        trace.lrs.append(lr_t)
        if step % 50 == 0:
            logger.debug(f"step {step}: loss {trace.losses[-1]:.5f}, lr {lr_t:.5f}")

    params.zero_grad()
    trace.final_accuracy = accuracy(data, params, cfg)
    logger.info(
        f"Finished training: final loss {trace.final_loss:.5f}, "
        f"accuracy {trace.final_accuracy:.3f}"
    )
    return trace
