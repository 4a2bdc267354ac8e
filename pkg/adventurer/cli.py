"""
Command bindings: each subcommand resolves a config, runs one harness operation
and writes its artifacts plus a replayable `manifest.json` into the output
directory.

Exit codes: 0 success, 1 failed check, 2 usage or config error, 3 I/O or
checkpoint error.
"""

import asyncio
import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Awaitable, Callable, Dict, List, Optional

import aiofiles

from adventurer.checkpoint import CheckpointStore, decode_checkpoint
from adventurer.config import ModelConfig, preset, published_size, read_values
from adventurer.errors import CheckpointError, ConfigError, NonFiniteError
from adventurer.harness.artifacts import (
    MANIFEST_VERSION,
    ArtifactWriter,
    csv_text,
    read_manifest,
)
from adventurer.harness.bench import (
    BENCH_COLUMNS,
    DEFAULT_LENGTHS,
    MIXERS,
    bench_scaling,
)
from adventurer.harness.data import ToyDataset
from adventurer.harness.sweep import ablation_sweep_async
from adventurer.harness.train import DEFAULT_LR, DEFAULT_STEPS, train_toy
from adventurer.harness.verify import run_verify as run_suites
from adventurer.model import count_params

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_IO = 3

COMMANDS = ("verify", "bench", "train-toy", "sweep", "params", "inspect")
SWEEP_STEPS = 50
CHECKPOINT_NAME = "model"


@dataclass
class CliInvocation:
    """
    One fully parsed command line.

    Attributes:
        subcommand (str): One of `COMMANDS`.
        config_path (Optional[str]): Flat key=value config file.
        out_dir (str): Artifact directory.
        seed (int): Root seed.
        overrides (List[str]): `key=value` strings applied after the config file.
        config_text (Optional[str]): Resolved config restored from a manifest.
    """

    subcommand: str
    config_path: Optional[str] = None
    out_dir: str = "runs"
    seed: int = 0
    overrides: List[str] = field(default_factory=list)
    preset: Optional[str] = None
    lengths: Optional[List[int]] = None
    steps: Optional[int] = None
    lr: float = DEFAULT_LR
    count: int = 32
    suites: List[str] = field(default_factory=list)
    axes: str = "heading,flip"
    quick: bool = False
    fault: Optional[str] = None
    allow_large: bool = False
    path: Optional[str] = None
    config_text: Optional[str] = None

    def flags(self) -> Dict[str, object]:
        """Snapshot stored in the manifest; enough to replay the run."""
        skip = ("subcommand", "out_dir", "seed", "config_text")
        return {k: v for k, v in dataclasses.asdict(self).items() if k not in skip}


def resolve_config(inv: CliInvocation) -> ModelConfig:
    """Preset, then config file, then `--set` overrides; a manifest config wins."""
    if inv.config_text is not None:
        return ModelConfig.from_text(inv.config_text)
    cfg = preset(inv.preset) if inv.preset else ModelConfig()
    if inv.config_path:
        cfg = cfg.with_values(read_values(inv.config_path))
    return cfg.with_overrides(inv.overrides)


async def invocation_from_manifest(path: str, out_dir: str) -> CliInvocation:
    """Rebuild the invocation recorded in a manifest, writing into `out_dir`."""
    manifest = await read_manifest(path)
    if manifest.get("manifest_version") != MANIFEST_VERSION:
        raise ConfigError(
            f"Manifest version {manifest.get('manifest_version')} is not supported"
        )
    names = {f.name for f in dataclasses.fields(CliInvocation)}
    flags = dict(manifest.get("flags") or {})
    unknown = sorted(set(flags) - names)
    if unknown:
        raise ConfigError(f"Manifest {path} has unknown flags {unknown}")
    command = manifest.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"Manifest {path} names unknown command {command!r}")
    logger.info(f"Replaying '{manifest['command']}' from {path}")
    return CliInvocation(
        subcommand=manifest["command"],
        out_dir=out_dir,
        seed=int(manifest["seed"]),
        config_text=manifest.get("config"),
        **flags,
    )


def _toy_data(inv: CliInvocation, cfg: ModelConfig) -> ToyDataset:
    return ToyDataset.generate(
        count=inv.count,
        num_classes=cfg.num_classes,
        image_size=cfg.image_size,
        channels=cfg.in_channels,
        seed=inv.seed,
    )


# --- Subcommands ---
async def run_verify(inv: CliInvocation, writer: ArtifactWriter) -> int:
    report = run_suites(
        inv.suites or None, fault=inv.fault, quick=inv.quick, seed=inv.seed
    )
    for line in report.summary_lines():
        print(line)
    await writer.write_json("verify.json", report.as_dict())
    await writer.write_manifest(inv.subcommand, None, inv.seed, inv.flags())
    if not report.passed:
        failure = report.first_failure
        print(f"First failure: {failure.name}: {failure.error}")
        return EXIT_FAILURE
    print(f"All {len(report.results)} suites passed")
    return EXIT_OK


async def run_params(inv: CliInvocation, writer: ArtifactWriter) -> int:
    cfg = resolve_config(inv)
    name = inv.preset or "custom"
    count = count_params(cfg)
    unchanged = inv.preset is not None and cfg == preset(inv.preset)
    target = published_size(name) if unchanged else None
    if target is None:
        print(f"{name}: {count:,} parameters")
    else:
        deviation = (count - target) / target
        print(f"{name}: {count:,} parameters (target {target:,}, {deviation:+.1%})")
    await writer.write_json(
        "params.json", {"preset": name, "count": count, "target": target}
    )
    await writer.write_manifest(inv.subcommand, cfg, inv.seed, inv.flags())
    return EXIT_OK


async def run_bench(inv: CliInvocation, writer: ArtifactWriter) -> int:
    cfg = resolve_config(inv)
    lengths = inv.lengths or list(DEFAULT_LENGTHS)
    rows, results = [], {}
    for mixer in MIXERS:
        result = bench_scaling(
            mixer, lengths, dim=cfg.dim, seed=inv.seed, allow_large=inv.allow_large
        )
        rows.extend(r.as_row() for r in result.records if r.phase == "forward")
        results[mixer] = {
            "time_slope": result.time_slope,
            "memory_slope": result.memory_slope,
            "records": [r.as_dict() for r in result.records],
        }
        print(
            f"{mixer}: time slope {result.time_slope:.3f}, "
            f"memory slope {result.memory_slope:.3f}"
        )
    await writer.write_csv("bench.csv", BENCH_COLUMNS, rows)
    await writer.write_json("bench.json", results)
    await writer.write_manifest(inv.subcommand, cfg, inv.seed, inv.flags())
    return EXIT_OK


async def run_train_toy(inv: CliInvocation, writer: ArtifactWriter) -> int:
    cfg = resolve_config(inv)
    data = _toy_data(inv, cfg)
    steps = DEFAULT_STEPS if inv.steps is None else inv.steps
    trace = train_toy(cfg, data, steps, inv.lr, seed=inv.seed)
    rows = [
        {"step": i, "lr": repr(lr), "loss": repr(loss)}
        for i, (lr, loss) in enumerate(zip(trace.lrs, trace.losses))
    ]
    await writer.write_csv("train.csv", ("step", "lr", "loss"), rows)
    store = CheckpointStore(writer.out_dir)
    await store.put(CHECKPOINT_NAME, trace.params, cfg, inv.seed)
    writer.written.append(CHECKPOINT_NAME + store.SUFFIX)
    await writer.write_manifest(inv.subcommand, cfg, inv.seed, inv.flags())
    print(f"final loss {trace.final_loss:.5f}, accuracy {trace.final_accuracy:.3f}")
    return EXIT_OK


async def run_sweep(inv: CliInvocation, writer: ArtifactWriter) -> int:
    cfg = resolve_config(inv)
    data = _toy_data(inv, cfg)
    steps = SWEEP_STEPS if inv.steps is None else inv.steps
    table = await ablation_sweep_async(
        cfg, inv.axes.split(","), data, steps, inv.lr, seed=inv.seed
    )
    await writer.write_text("sweep.csv", table.to_csv())
    await writer.write_manifest(inv.subcommand, cfg, inv.seed, inv.flags())
    for row in table.failed():
        print(f"cell {row.cell} failed: {row.error}")
    print(f"{len(table.rows)} cells, {len(table.failed())} failed")
    return EXIT_OK


async def run_inspect(inv: CliInvocation, writer: ArtifactWriter) -> int:
    if not inv.path:
        raise ConfigError("inspect needs a checkpoint path")
    async with aiofiles.open(inv.path, mode="rb") as f:
        checkpoint = decode_checkpoint(await f.read())
    print(f"version {checkpoint.version}, seed {checkpoint.seed}")
    print(checkpoint.config.to_text(), end="")
    rows = [
        {"name": name, "shape": "x".join(map(str, arr.shape)), "size": arr.size}
        for name, arr in sorted(checkpoint.tensors.items())
    ]
    for row in rows:
        print(f"{row['name']:<32} {row['shape']:>14} {row['size']:>10}")
    total = sum(r["size"] for r in rows)
    print(f"{len(rows)} tensors, {total:,} parameters")
    await writer.write_text("inspect.csv", csv_text(("name", "shape", "size"), rows))
    cfg = checkpoint.config
    await writer.write_manifest(inv.subcommand, cfg, inv.seed, inv.flags())
    return EXIT_OK


HANDLERS: Dict[str, Callable[[CliInvocation, ArtifactWriter], Awaitable[int]]] = {
    "verify": run_verify,
    "bench": run_bench,
    "train-toy": run_train_toy,
    "sweep": run_sweep,
    "params": run_params,
    "inspect": run_inspect,
}


async def dispatch(inv: CliInvocation, from_manifest: Optional[str] = None) -> int:
    if from_manifest:
        inv = await invocation_from_manifest(from_manifest, inv.out_dir)
    if inv.subcommand not in HANDLERS:
        raise ConfigError(f"Unknown command {inv.subcommand!r}")
    logger.info(f"Running '{inv.subcommand}' with seed {inv.seed} into {inv.out_dir}")
    return await HANDLERS[inv.subcommand](inv, ArtifactWriter(inv.out_dir))


def execute(inv: CliInvocation, from_manifest: Optional[str] = None) -> int:
    """Run one invocation and map its outcome to an exit code."""
    try:
        return asyncio.run(dispatch(inv, from_manifest))
    except ConfigError as e:
        print(f"error: {e}")
        return EXIT_USAGE
    except (CheckpointError, OSError) as e:
        logger.error(f"I/O failure: {e}")
        print(f"error: {e}")
        return EXIT_IO
    except (AssertionError, NonFiniteError) as e:
        print(f"error: {e}")
        return EXIT_FAILURE
    except Exception as e:
        logger.error(f"Unexpected error in '{inv.subcommand}': {e}", exc_info=True)
        return EXIT_FAILURE


def parse_lengths(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"Lengths must be comma-separated integers, got {text!r}")

