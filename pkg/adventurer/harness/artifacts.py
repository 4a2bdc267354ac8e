"""
Run artifacts: CSV tables and JSON manifests written into an output directory.

Every file is written to `<name>.part` and then renamed, so a reader never sees
a half-written artifact.
"""

import csv
import io
import json
import logging
import os
from typing import Dict, Iterable, List, Mapping, Optional, Sequence

import aiofiles
import aiofiles.os

from adventurer.config import ModelConfig
from adventurer.utils import host_info

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1


def csv_text(columns: Sequence[str], rows: Iterable[Mapping[str, object]]) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({c: row[c] for c in columns})
    return buf.getvalue()


def build_manifest(
    command: str,
    cfg: Optional[ModelConfig],
    seed: int,
    flags: Mapping[str, object],
    outputs: Sequence[str] = (),
) -> Dict[str, object]:
    """Describe a run completely enough to replay it."""
    return {
        "manifest_version": MANIFEST_VERSION,
        "command": command,
        "seed": seed,
        "flags": dict(flags),
        "config": cfg.to_text() if cfg is not None else None,
        "host": host_info(),
        "outputs": list(outputs),
    }


class ArtifactWriter:
    """
    Atomic asynchronous writer for one output directory.

    Attributes:
        out_dir (str): Directory receiving the artifacts.
        written (List[str]): Names written so far, in order.
    """

    TEMP_SUFFIX = ".part"

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.written: List[str] = []
        try:
            os.makedirs(self.out_dir, exist_ok=True)
        except OSError as e:
            logger.error(f"Failed to create output directory {self.out_dir}: {e}")
            raise

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    async def write_bytes(self, name: str, data: bytes) -> str:
        path = self.path(name)
        temp_path = path + self.TEMP_SUFFIX
        try:
            async with aiofiles.open(temp_path, mode="wb") as f:
                await f.write(data)
            await aiofiles.os.replace(temp_path, path)
        except OSError as e:
            logger.error(f"OS error writing artifact {path}: {e}")
            if await aiofiles.os.path.exists(temp_path):
                await aiofiles.os.remove(temp_path)
            raise
        self.written.append(name)
        logger.info(f"Wrote {name} ({len(data)} bytes)")
        return path

    async def write_text(self, name: str, text: str) -> str:
        return await self.write_bytes(name, text.encode("utf-8"))

    async def write_json(self, name: str, payload: object) -> str:
        text = json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n"
        return await self.write_text(name, text)

    async def write_csv(
        self, name: str, columns: Sequence[str], rows: Iterable[Mapping[str, object]]
    ) -> str:
        return await self.write_text(name, csv_text(columns, rows))

    async def write_manifest(
        self,
        command: str,
        cfg: Optional[ModelConfig],
        seed: int,
        flags: Mapping[str, object],
    ) -> str:
        """Write `manifest.json` listing every artifact written before it."""
        manifest = build_manifest(command, cfg, seed, flags, self.written)
        return await self.write_json(MANIFEST_NAME, manifest)


async def read_manifest(path: str) -> Dict[str, object]:
    """Load a manifest written by `ArtifactWriter.write_manifest`."""
    async with aiofiles.open(path, mode="r", encoding="utf-8") as f:
        return json.loads(await f.read())


async def read_text(path: str) -> str:
    async with aiofiles.open(path, mode="r", encoding="utf-8") as f:
        return await f.read()
