# -*- coding: utf-8 -*-
"""
Checkpoint encoding and the on-disk checkpoint store (`CheckpointStore`)

Binary layout, all integers little-endian:

    magic        8 bytes  b"ADVNTRR\\x00"
    version      u32
    config       u32 length + UTF-8 canonical key=value text
    seed         u64
    count        u32
    per tensor   u16 name length + UTF-8 name, u8 rank, u32 extent * rank,
                 float32 values in row-major order

Tensors are written in sorted name order, so save -> load -> save reproduces
the same bytes.

`CheckpointStore` keeps named checkpoints in a directory:
- Writes go to a `.part` file first and are renamed into place.
- Reads return None on a miss; decode failures are raised to the caller.
"""

import io
import logging
import os
import struct
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import aiofiles
import aiofiles.os
import numpy as np

from adventurer.config import ModelConfig
from adventurer.errors import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
    ConfigError,
)
from adventurer.model import AdventurerParams, assign_state, init_params, param_shapes

logger = logging.getLogger(__name__)

MAGIC = b"ADVNTRR\x00"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    version: int
    config: ModelConfig
    tensors: Dict[str, np.ndarray]
    seed: int = 0


# --- Encoding ---
def encode_checkpoint(
    tensors: Dict[str, np.ndarray], cfg: ModelConfig, seed: int = 0
) -> bytes:
    """Serialize named arrays and their config."""
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", FORMAT_VERSION))
    text = cfg.to_text().encode("utf-8")
    out.write(struct.pack("<I", len(text)))
    out.write(text)
    out.write(struct.pack("<Q", int(seed)))
    out.write(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        encoded = name.encode("utf-8")
        out.write(struct.pack("<H", len(encoded)))
        out.write(encoded)
        out.write(struct.pack("<B", arr.ndim))
        out.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.write(arr.tobytes())
    return out.getvalue()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointTruncatedError(
                f"Checkpoint ends at byte {len(self.data)}, needed {self.pos + n}"
            )
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data: bytes) -> Checkpoint:
    """
    Parse checkpoint bytes.

    Raises:
        CheckpointFormatError: Wrong magic bytes, an unreadable config or
            tensor name, or trailing bytes.
        CheckpointVersionError: Unsupported version.
        CheckpointTruncatedError: Data ends early.
        CheckpointShapeError: Tensors disagree with the stored config.
    """
    reader = _Reader(data)
    if reader.take(len(MAGIC)) != MAGIC:
        raise CheckpointFormatError("Not an adventurer checkpoint (bad magic bytes)")
    (version,) = reader.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"Checkpoint version {version} is not supported (expected {FORMAT_VERSION})"
        )
    (text_len,) = reader.unpack("<I")
    try:
        cfg = ModelConfig.from_text(reader.take(text_len).decode("utf-8"))
    except (UnicodeDecodeError, ConfigError) as e:
        raise CheckpointFormatError(f"Stored config is unreadable: {e}")
    (seed,) = reader.unpack("<Q")
    (count,) = reader.unpack("<I")
    tensors: Dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        try:
            name = reader.take(name_len).decode("utf-8")
        except UnicodeDecodeError as e:
            raise CheckpointFormatError(f"Tensor name is not valid UTF-8: {e}")
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}I")
        size = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(reader.take(4 * size), dtype="<f4")
        tensors[name] = values.reshape(shape).astype(np.float32)
    if reader.pos != len(data):
        extra = len(data) - reader.pos
        raise CheckpointFormatError(f"{extra} trailing bytes after tensors")
    _check_shapes(tensors, cfg)
    return Checkpoint(version, cfg, tensors, seed)


def _check_shapes(tensors: Dict[str, np.ndarray], cfg: ModelConfig) -> None:
    expected = param_shapes(cfg)
    if set(expected) != set(tensors):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise CheckpointShapeError(
            f"Tensors do not match config: missing {missing[:5]}, "
            f"unexpected {extra[:5]}"
        )
    for name, shape in expected.items():
        if tuple(tensors[name].shape) != tuple(shape):
            raise CheckpointShapeError(
                f"{name}: stored {tensors[name].shape}, config expects {shape}"
            )


def params_to_arrays(params: AdventurerParams) -> Dict[str, np.ndarray]:
    return {name: t.data for name, t in params.named_tensors().items()}


def restore(checkpoint: Checkpoint) -> Tuple[AdventurerParams, ModelConfig]:
    params = init_params(checkpoint.config, checkpoint.seed)
    assign_state(params, checkpoint.tensors)
    return params, checkpoint.config


# --- Synchronous file access ---
def save_checkpoint(
    params: AdventurerParams, cfg: ModelConfig, path: str, seed: int = 0
) -> None:
    """Write `params` and `cfg` to `path`."""
    data = encode_checkpoint(params_to_arrays(params), cfg, seed)
    with open(path, "wb") as f:
        f.write(data)
    logger.info(f"Saved checkpoint ({len(data)} bytes) to {path}")


def load_checkpoint(path: str) -> Tuple[AdventurerParams, ModelConfig]:
    """Read a checkpoint written by `save_checkpoint`."""
    with open(path, "rb") as f:
        data = f.read()
    return restore(decode_checkpoint(data))


# --- Store ---
class CheckpointStore:
    """
    Directory of named checkpoints with atomic writes.

    Attributes:
        root (str): Directory holding `<name>.ckpt` files.
    """

    SUFFIX = ".ckpt"
    TEMP_SUFFIX = ".part"

    def __init__(self, root: str):
        self.root = root
        try:
            os.makedirs(self.root, exist_ok=True)
            logger.info(f"Checkpoint directory confirmed/created at: {self.root}")
        except OSError as e:
            logger.error(f"Failed to create checkpoint directory {self.root}: {e}")
            raise e

    def _path(self, name: str) -> str:
        if not name or "/" in name or name in (".", ".."):
            raise ValueError(f"Invalid checkpoint name {name!r}")
        return os.path.join(self.root, f"{name}{self.SUFFIX}")

    async def exists(self, name: str) -> bool:
        return await aiofiles.os.path.exists(self._path(name))

    async def put(
        self, name: str, params: AdventurerParams, cfg: ModelConfig, seed: int = 0
    ) -> str:
        """Encode and store a checkpoint; return its path."""
        path = self._path(name)
        temp_path = path + self.TEMP_SUFFIX
        data = encode_checkpoint(params_to_arrays(params), cfg, seed)
        try:
            async with aiofiles.open(temp_path, mode="wb") as f:
                await f.write(data)
            await aiofiles.os.replace(temp_path, path)
        except OSError as e:
            logger.error(f"OS error writing checkpoint {path}: {e}")
            if await aiofiles.os.path.exists(temp_path):
                await aiofiles.os.remove(temp_path)
            raise
        logger.info(f"Stored checkpoint '{name}' ({len(data)} bytes) at {path}")
        return path

    async def get(self, name: str) -> Optional[Checkpoint]:
        """Decode a stored checkpoint, or None when absent."""
        path = self._path(name)
        if not await aiofiles.os.path.exists(path):
            logger.debug(f"Checkpoint miss for '{name}'")
            return None
        async with aiofiles.open(path, mode="rb") as f:
            data = await f.read()
        return decode_checkpoint(data)

    async def list_names(self) -> List[str]:
        names = []
        for filename in await aiofiles.os.listdir(self.root):
            if filename.endswith(self.SUFFIX):
                names.append(filename[: -len(self.SUFFIX)])
        return sorted(names)
