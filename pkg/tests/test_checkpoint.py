# test_checkpoint.py

import logging
import os
import struct

import numpy as np
import pytest
import pytest_asyncio

from adventurer.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    CheckpointStore,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    logger,
    params_to_arrays,
    restore,
    save_checkpoint,
)
from adventurer.config import ModelConfig
from adventurer.errors import (
    CheckpointFormatError,
    CheckpointShapeError,
    CheckpointTruncatedError,
    CheckpointVersionError,
)
from adventurer.model import classify, init_params
from adventurer.rng import Rng

logging.basicConfig(
    level=logging.DEBUG, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)
logger.setLevel(logging.DEBUG)

# --- Test Data ---
CONFIG = ModelConfig(
    depth=1, dim=16, patch_size=4, image_size=8, d_state=4, head_dim=8, num_classes=2
)
OTHER_CONFIG = CONFIG.with_values({"dim": 8})


def _encoded(seed: int = 3) -> bytes:
    params = init_params(CONFIG, seed)
    return encode_checkpoint(params_to_arrays(params), CONFIG, seed)


# --- Fixtures ---


@pytest_asyncio.fixture
async def store(tmp_path):
    """Provides a CheckpointStore rooted in a fresh temp directory."""
    return CheckpointStore(str(tmp_path / "checkpoints"))


@pytest.fixture
def params():
    return init_params(CONFIG, seed=3)


# --- Encoding ---


class TestEncoding:

    def test_header_layout(self):
        data = _encoded()
        assert data[:8] == MAGIC
        assert struct.unpack("<I", data[8:12]) == (FORMAT_VERSION,)

    def test_round_trip_is_byte_identical(self):
        data = _encoded()
        decoded = decode_checkpoint(data)
        again = encode_checkpoint(decoded.tensors, decoded.config, decoded.seed)
        assert again == data
        assert decoded.config == CONFIG
        assert decoded.seed == 3

    def test_restore_reproduces_outputs(self, params):
        restored, cfg = restore(decode_checkpoint(_encoded()))
        image = Rng(0).normal((3, 8, 8))
        np.testing.assert_array_equal(
            classify(image, restored, cfg).data, classify(image, params, CONFIG).data
        )

    def test_bad_magic(self):
        data = b"NOTACKPT" + _encoded()[8:]
        with pytest.raises(CheckpointFormatError):
            decode_checkpoint(data)

    def test_unsupported_version(self):
        data = bytearray(_encoded())
        data[8:12] = struct.pack("<I", FORMAT_VERSION + 1)
        with pytest.raises(CheckpointVersionError):
            decode_checkpoint(bytes(data))

    @pytest.mark.parametrize("keep", [4, 10, 40, -1])
    def test_truncated(self, keep):
        data = _encoded()
        with pytest.raises(CheckpointTruncatedError):
            decode_checkpoint(data[:keep])

    def test_trailing_bytes(self):
        with pytest.raises(CheckpointFormatError):
            decode_checkpoint(_encoded() + b"\x00")

    def test_tensor_name_not_utf8(self):
        data = bytearray(_encoded())
        (text_len,) = struct.unpack_from("<I", data, len(MAGIC) + 4)
        name_start = len(MAGIC) + 4 + 4 + text_len + 8 + 4 + 2
        data[name_start] = 0xFF
        with pytest.raises(CheckpointFormatError, match="UTF-8"):
            decode_checkpoint(bytes(data))

    def test_shapes_must_match_config(self, params):
        arrays = params_to_arrays(params)
        data = encode_checkpoint(arrays, OTHER_CONFIG, 3)
        with pytest.raises(CheckpointShapeError):
            decode_checkpoint(data)

    def test_sync_save_and_load(self, tmp_path, params):
        path = str(tmp_path / "model.ckpt")
        save_checkpoint(params, CONFIG, path, seed=3)
        loaded, cfg = load_checkpoint(path)
        assert cfg == CONFIG
        for name, t in loaded.named_tensors().items():
            np.testing.assert_array_equal(t.data, params.named_tensors()[name].data)


# --- Store ---


@pytest.mark.asyncio
class TestCheckpointStore:

    async def test_creates_root(self, store):
        """Creating the store creates its directory."""
        assert os.path.isdir(store.root)

    async def test_put_and_get(self, store, params):
        """A stored checkpoint decodes back to the same tensors."""
        path = await store.put("model", params, CONFIG, seed=3)
        assert path.endswith("model.ckpt")
        assert await store.exists("model")
        checkpoint = await store.get("model")
        assert checkpoint.config == CONFIG
        for name, arr in params_to_arrays(params).items():
            np.testing.assert_array_equal(checkpoint.tensors[name], arr)

    async def test_put_leaves_no_temp_file(self, store, params):
        """The temporary file is renamed into place."""
        await store.put("model", params, CONFIG)
        assert os.listdir(store.root) == ["model.ckpt"]

    async def test_get_miss_returns_none(self, store):
        """An absent checkpoint reads as None."""
        assert await store.get("missing") is None
        assert not await store.exists("missing")

    async def test_corrupt_file_raises(self, store):
        """Decode failures reach the caller."""
        with open(os.path.join(store.root, "bad.ckpt"), "wb") as f:
            f.write(b"garbage!" * 4)
        with pytest.raises(CheckpointFormatError):
            await store.get("bad")

    async def test_list_names(self, store, params):
        """Only checkpoint files are listed, sorted by name."""
        await store.put("b", params, CONFIG)
        await store.put("a", params, CONFIG)
        with open(os.path.join(store.root, "notes.txt"), "w") as f:
            f.write("ignored")
        assert await store.list_names() == ["a", "b"]

    @pytest.mark.parametrize("name", ["", "..", "a/b"])
    async def test_invalid_names(self, store, name):
        """Names that would escape the directory are rejected."""
        with pytest.raises(ValueError):
            await store.exists(name)
