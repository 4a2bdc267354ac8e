"""
Token-mixer scaling benchmarks.

Each record times the forward pass of one token mixer at one sequence length
(per-call time over warm samples, each sample an inner loop run to a time
budget), measures the peak transient allocation in a separate traced run,
and counts multiply-accumulates.
"""

import gc
import logging
import math
import statistics
import time
import tracemalloc
from dataclasses import asdict, dataclass
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from adventurer import tensor as T
from adventurer.errors import ConfigError
from adventurer.layers.attention import AttnLayerParams, attention_tensor
from adventurer.layers.ssd import SsdLayerParams, mamba2_tensor
from adventurer.rng import Rng
from adventurer.tensor import Tensor
from adventurer.utils import fit_loglog_slope

logger = logging.getLogger(__name__)

MIXERS = ("mamba2", "causal-attn", "full-attn")
WARMUP = 2
MIN_REPEATS = 5
TIME_BUDGET_MS = 50.0
BENCH_DIM = 64
DEFAULT_LENGTHS = (256, 512, 1024, 2048)
MAX_DESK_LENGTH = 4096
BENCH_D_STATE = 16
BENCH_HEAD_DIM = 16
BENCH_COLUMNS = ("config_id", "L", "ms_median", "peak_bytes", "macs")


@dataclass
class BenchRecord:
    config_id: str
    length: int
    repeats: int
    ms_median: float = float("nan")
    ms_min: float = float("nan")
    peak_bytes: int = 0
    macs: int = 0
    phase: str = "forward"
    failed: bool = False
    error: str = ""

    def as_row(self) -> Dict[str, object]:
        return {
            "config_id": self.config_id,
            "L": self.length,
            "ms_median": self.ms_median,
            "peak_bytes": self.peak_bytes,
            "macs": self.macs,
        }

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


@dataclass
class ScalingResult:
    mixer: str
    records: List[BenchRecord]
    time_slope: float
    memory_slope: float

    def ok_records(self) -> List[BenchRecord]:
        return [r for r in self.records if not r.failed and r.phase == "forward"]


def make_mixer(mixer: str, dim: int, seed: int = 0):
    """Layer parameters plus the matching forward function."""
    rng = Rng(seed).split(f"bench.{mixer}")
    if mixer == "mamba2":
        head_dim = min(BENCH_HEAD_DIM, 2 * dim)
        params = SsdLayerParams.init(rng, dim, BENCH_D_STATE, head_dim)
        return params, mamba2_tensor
    if mixer in ("causal-attn", "full-attn"):
        mask = "causal" if mixer == "causal-attn" else "full"
        return AttnLayerParams.init(rng, dim, max(1, dim // 64), mask), attention_tensor
    raise ConfigError(f"Unknown mixer {mixer!r}; expected one of {MIXERS}")


def _validate_lengths(lengths: Sequence[int], allow_large: bool) -> List[int]:
    lengths = [int(v) for v in lengths]
    if len(lengths) < 3:
        raise ConfigError(f"Need at least 3 lengths for a slope fit, got {lengths}")
    if any(b <= a for a, b in zip(lengths, lengths[1:])) or lengths[0] < 1:
        raise ConfigError(
            f"Lengths must be positive and strictly ascending, got {lengths}"
        )
    if not allow_large and lengths[-1] > MAX_DESK_LENGTH:
        raise ConfigError(
            f"Length {lengths[-1]} exceeds the desk-scale cap {MAX_DESK_LENGTH}; "
            "pass allow_large to run it"
        )
    return lengths


def _calls_per_sample(fn: Callable[[], object], budget_ms: float) -> int:
    """Call count whose loop takes at least `budget_ms`."""
    calls = 1
    while True:
        start = time.perf_counter()
        for _ in range(calls):
            fn()
        elapsed = (time.perf_counter() - start) * 1e3
        if elapsed >= budget_ms:
            return calls
        calls = max(calls * 2, math.ceil(calls * budget_ms / max(elapsed, 1e-3)))


def _time_ms(
    fn: Callable[[], object], repeats: int, budget_ms: float = TIME_BUDGET_MS
) -> Tuple[float, float]:
    """Median and minimum per-call milliseconds over `repeats` samples."""
    for _ in range(WARMUP):
        fn()
    calls = _calls_per_sample(fn, budget_ms)
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        for _ in range(calls):
            fn()
        times.append((time.perf_counter() - start) * 1e3 / calls)
    return statistics.median(times), min(times)


def _peak_bytes(fn: Callable[[], object]) -> int:
    gc.collect()
    tracemalloc.start()
    try:
        tracemalloc.reset_peak()
        base, _ = tracemalloc.get_traced_memory()
        fn()
        _, peak = tracemalloc.get_traced_memory()
    finally:
        tracemalloc.stop()
    return max(0, peak - base)


def _count_macs(fn: Callable[[], object]) -> int:
    with T.count_ops() as counter:
        fn()
    return counter.macs


def measure(
    mixer: str,
    length: int,
    dim: int,
    repeats: int,
    *,
    seed: int = 0,
    budget_ms: float = TIME_BUDGET_MS,
) -> BenchRecord:
    """One forward-pass record of `mixer` at `length` tokens."""
    params, forward = make_mixer(mixer, dim, seed)
    x = Tensor(Rng(seed).split(f"bench.x.{length}").normal((length, dim)))

    def run():
        with T.no_grad():
            return forward(x, params)

    record = BenchRecord(mixer, length, repeats)
    record.macs = _count_macs(run)
    record.ms_median, record.ms_min = _time_ms(run, repeats, budget_ms)
    record.peak_bytes = _peak_bytes(run)
    return record


def measure_train_step(
    mixer: str,
    length: int,
    dim: int,
    repeats: int,
    *,
    seed: int = 0,
    budget_ms: float = TIME_BUDGET_MS,
) -> BenchRecord:
    """One combined forward and backward record at `length` tokens."""
    params, forward = make_mixer(mixer, dim, seed)
    x = Tensor(Rng(seed).split(f"bench.x.{length}").normal((length, dim)))

    def run():
        for p in params.parameters():
            p.zero_grad()
        T.backward(T.mean(forward(x, params)))

    record = BenchRecord(mixer, length, repeats, phase="forward+backward")
    record.macs = _count_macs(run)
    record.ms_median, record.ms_min = _time_ms(run, repeats, budget_ms)
    record.peak_bytes = _peak_bytes(run)
    return record


def bench_scaling(
    mixer: str,
    lengths: Sequence[int] = DEFAULT_LENGTHS,
    dim: int = BENCH_DIM,
    repeats: int = MIN_REPEATS,
    *,
    seed: int = 0,
    budget_ms: float = TIME_BUDGET_MS,
    allow_large: bool = False,
    with_backward: bool = True,
) -> ScalingResult:
    """
    Time and measure `mixer` at every length, then fit log-log slopes.

    Args:
        mixer: mamba2 | causal-attn | full-attn.
        lengths: Strictly ascending token counts, at least three.
        dim: Model width of the benchmarked layer.
        repeats: Timed samples per length after the warmup runs (at least 5).
        budget_ms: Minimum wall time of one sample; short calls are looped.
        seed: Parameter and input seed.
        allow_large: Permit lengths above the desk-scale cap.
        with_backward: Also record one forward+backward point at the smallest
            length.

    Returns:
        ScalingResult: Records plus time and memory slopes fitted over the
            successful lengths. Time slopes use the per-call minimum.

    Raises:
        ConfigError: On an unknown mixer, invalid lengths or too few repeats.
    """
    if mixer not in MIXERS:
        raise ConfigError(f"Unknown mixer {mixer!r}; expected one of {MIXERS}")
    if repeats < MIN_REPEATS:
        raise ConfigError(f"repeats must be >= {MIN_REPEATS}, got {repeats}")
    lengths = _validate_lengths(lengths, allow_large)
    records: List[BenchRecord] = []
    for length in lengths:
        try:
            record = measure(
                mixer, length, dim, repeats, seed=seed, budget_ms=budget_ms
            )
            logger.info(
                f"{mixer} L={length}: {record.ms_median:.3f} ms, "
                f"{record.peak_bytes} bytes, {record.macs} MACs"
            )
        except MemoryError as e:
            logger.warning(f"{mixer} L={length} ran out of memory: {e}")
            record = BenchRecord(
                mixer, length, repeats, failed=True, error="MemoryError"
            )
        records.append(record)
    if with_backward:
        try:
            record = measure_train_step(
                mixer, lengths[0], dim, repeats, seed=seed, budget_ms=budget_ms
            )
            records.append(record)
        except MemoryError as e:
            logger.warning(f"{mixer} forward+backward ran out of memory: {e}")

    result = ScalingResult(mixer, records, float("nan"), float("nan"))
    ok = result.ok_records()
    if len(ok) >= 2:
        xs = [r.length for r in ok]
        result.time_slope = fit_loglog_slope(xs, [r.ms_min for r in ok])
        result.memory_slope = fit_loglog_slope(xs, [max(r.peak_bytes, 1) for r in ok])
    logger.info(
        f"{mixer}: time slope {result.time_slope:.3f}, "
        f"memory slope {result.memory_slope:.3f}"
    )
    return result


def time_ratios(numer: ScalingResult, denom: ScalingResult) -> List[Tuple[int, float]]:
    """(L, numer_ms / denom_ms) on per-call minima at lengths where both succeeded."""
    d = {r.length: r.ms_min for r in denom.ok_records()}
    return [
        (r.length, r.ms_min / d[r.length])
        for r in numer.ok_records()
        if r.length in d
    ]


def strictly_increasing(values: Sequence[float]) -> bool:
    return all(b > a for a, b in zip(values, values[1:]))


def mac_slope(mixer: str, lengths: Sequence[int], dim: int = 16) -> float:
    """Log-log slope of counted multiply-accumulates; deterministic."""
    macs = []
    for length in lengths:
        params, forward = make_mixer(mixer, dim)
        x = Tensor(np.zeros((length, dim)))
        with T.no_grad():
            macs.append(_count_macs(lambda: forward(x, params)))
    return fit_loglog_slope(lengths, macs)
