"""
Synthetic image classification data.

Each class is a sinusoidal grating at its own orientation; phase, per-channel
gain and additive noise vary per image.
"""

import logging
from dataclasses import dataclass

import numpy as np

from adventurer.errors import ConfigError
from adventurer.rng import Rng

logger = logging.getLogger(__name__)

CYCLES = 4.0


@dataclass(frozen=True)
class ToyDataset:
    """
    Attributes:
        images (np.ndarray): [count, channels, size, size] float32.
        labels (np.ndarray): Integer class per image.
        seed (int): Generator seed.
        num_classes (int): Class count.
        family (str): Pattern family name.
    """

    images: np.ndarray
    labels: np.ndarray
    seed: int
    num_classes: int
    family: str = "oriented-gratings"

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def image_size(self) -> int:
        return self.images.shape[-1]

    @classmethod
    def generate(
        cls,
        count: int = 32,
        num_classes: int = 2,
        image_size: int = 32,
        channels: int = 3,
        seed: int = 0,
        noise: float = 0.3,
    ) -> "ToyDataset":
        """
        Draw `count` images; labels are balanced to within one per class.

        Raises:
            ConfigError: On non-positive sizes or fewer than two classes.
        """
        if count < 1 or image_size < 1 or channels < 1:
            raise ConfigError(
                f"Invalid dataset extents: count {count}, "
                f"size {image_size}, channels {channels}"
            )
        if num_classes < 2:
            raise ConfigError(f"Need at least 2 classes, got {num_classes}")
        rng = Rng(seed).split("toy-data")
        labels = (np.arange(count) % num_classes)[rng.permutation(count)]
        coords = np.arange(image_size, dtype=np.float64) / image_size
        yy, xx = np.meshgrid(coords, coords, indexing="ij")
        phases = rng.split("phase").uniform(0.0, 2 * np.pi, (count,), dtype=np.float64)
        gains = rng.split("gain").uniform(0.5, 1.5, (count, channels), dtype=np.float64)
        noise_field = rng.split("noise").normal(
            (count, channels, image_size, image_size), std=noise, dtype=np.float64
        )
        images = np.empty((count, channels, image_size, image_size), dtype=np.float32)
        for i, k in enumerate(labels):
            theta = np.pi * k / num_classes
            along = xx * np.cos(theta) + yy * np.sin(theta)
            wave = np.sin(2 * np.pi * CYCLES * along + phases[i])
            images[i] = gains[i][:, None, None] * wave[None] + noise_field[i]
        logger.debug(f"Generated {count} grating images over {num_classes} classes")
        return cls(images, labels.astype(np.int64), seed, num_classes)
