"""
Ablation sweeps: one toy training run per combination of config axes.

Every cell starts from the same initialization seed. Cells are dispatched to an
executor; a failing cell is recorded with its error and the sweep continues.
"""

import asyncio
import csv
import io
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

from adventurer.config import ModelConfig
from adventurer.errors import ConfigError
from adventurer.harness.data import ToyDataset
from adventurer.harness.train import DEFAULT_LR, train_toy

logger = logging.getLogger(__name__)

AXIS_VALUES: Dict[str, Tuple[object, ...]] = {
    "heading": ("average", "off"),
    "flip": ("inter-layer", "off"),
    "channel_mixer": ("swiglu", "plain-mlp", "none"),
    "token_mixer": ("mamba2", "causal-attn", "full-attn"),
    "heading_variant": (
        "average",
        "grid1",
        "grid4",
        "grid9",
        "duplicate-cls",
        "learnable",
    ),
    "recalc_heading": (True, False),
    "scan": ("one-way", "per-layer-bidirectional"),
}
METRIC_COLUMNS = ("final_loss", "final_acc")


def parse_axes(text: str | Sequence[str]) -> List[str]:
    """
    Split a comma-separated axis list.

    Raises:
        ConfigError: On unknown or repeated axes.
    """
    axes = [a.strip() for a in text.split(",")] if isinstance(text, str) else list(text)
    axes = [a for a in axes if a]
    unknown = [a for a in axes if a not in AXIS_VALUES]
    if unknown or not axes:
        raise ConfigError(
            f"Unknown sweep axes {unknown}; valid axes: {sorted(AXIS_VALUES)}"
        )
    if len(set(axes)) != len(axes):
        raise ConfigError(f"Repeated sweep axis in {axes}")
    return axes


def apply_axis(cfg: ModelConfig, axis: str, value) -> ModelConfig:
    """`cfg` with one axis set to `value`."""
    if axis == "heading_variant":
        value = str(value)
        if value.startswith("grid"):
            tokens = int(value[4:])
            return cfg.with_values({"heading": "grid", "heading_tokens": tokens})
        return cfg.with_values({"heading": value})
    return cfg.with_values({axis: value})


def cell_configs(
    base: ModelConfig, axes: Sequence[str]
) -> List[Tuple[Dict[str, object], Union[ModelConfig, ConfigError]]]:
    """
    Cartesian product of axis values, in axis order.

    A cell whose values do not form a valid config carries its `ConfigError`
    in place of the config.
    """
    cells = []
    for values in itertools.product(*(AXIS_VALUES[a] for a in axes)):
        cfg = base
        try:
            for axis, value in zip(axes, values):
                cfg = apply_axis(cfg, axis, value)
        except ConfigError as e:
            cfg = e
        cells.append((dict(zip(axes, values)), cfg))
    return cells


@dataclass
class SweepRow:
    cell: Dict[str, object]
    config: Optional[ModelConfig]
    final_loss: float = float("nan")
    final_acc: float = float("nan")
    error: Optional[str] = None


@dataclass
class SweepTable:
    axes: List[str]
    rows: List[SweepRow] = field(default_factory=list)

    @property
    def columns(self) -> List[str]:
        return list(self.axes) + list(METRIC_COLUMNS)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            values = [_format_cell(row.cell[a]) for a in self.axes]
            writer.writerow(values + [repr(row.final_loss), repr(row.final_acc)])
        return buf.getvalue()

    def failed(self) -> List[SweepRow]:
        return [r for r in self.rows if r.error is not None]


def _format_cell(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _run_cell(
    cell: Dict[str, object],
    cfg: Union[ModelConfig, ConfigError],
    data: ToyDataset,
    steps: int,
    lr: float,
    seed: int,
) -> SweepRow:
    if isinstance(cfg, ConfigError):
        raise cfg
    trace = train_toy(cfg, data, steps, lr, seed=seed)
    return SweepRow(cell, cfg, trace.final_loss, trace.final_accuracy)


async def ablation_sweep_async(
    base_cfg: ModelConfig,
    axes: Sequence[str],
    data: ToyDataset,
    steps: int = 50,
    lr: float = DEFAULT_LR,
    *,
    seed: int = 0,
    max_workers: int = 1,
) -> SweepTable:
    """
    Train one model per axis combination.

    Args:
        base_cfg: Configuration shared by all cells before axis values are applied.
        axes: Axis names from `AXIS_VALUES`.
        data: Training set for every cell.
        steps: SGD steps per cell.
        lr: Peak learning rate per cell.
        seed: Initialization seed, identical for every cell.
        max_workers: Executor threads evaluating cells.

    Returns:
        SweepTable: One row per cell in product order.
    """
    axes = parse_axes(axes)
    cells = cell_configs(base_cfg, axes)
    logger.info(f"Sweeping {len(cells)} cells over axes {axes}")
    loop = asyncio.get_running_loop()
    with ThreadPoolExecutor(max_workers=max_workers) as executor:
        futures = [
            loop.run_in_executor(executor, _run_cell, cell, cfg, data, steps, lr, seed)
            for cell, cfg in cells
        ]
        results = await asyncio.gather(*futures, return_exceptions=True)

    table = SweepTable(list(axes))
    for (cell, cfg), result in zip(cells, results):
        if isinstance(result, BaseException):
            logger.warning(f"Sweep cell {cell} failed: {result}")
            error = f"{type(result).__name__}: {result}"
            config = cfg if isinstance(cfg, ModelConfig) else None
            table.rows.append(SweepRow(cell, config, error=error))
        else:
            logger.info(
                f"Cell {cell}: loss {result.final_loss:.4f}, "
                f"acc {result.final_acc:.3f}"
            )
            table.rows.append(result)
    return table


def ablation_sweep(
    base_cfg: ModelConfig,
    axes: Sequence[str],
    data: ToyDataset,
    steps: int = 50,
    lr: float = DEFAULT_LR,
    *,
    seed: int = 0,
    max_workers: int = 1,
) -> SweepTable:
    """Synchronous wrapper around `ablation_sweep_async`."""
    return asyncio.run(
        ablation_sweep_async(
            base_cfg, axes, data, steps, lr, seed=seed, max_workers=max_workers
        )
    )
