"""
Property suites checking the model against independent oracles.

Each suite raises `AssertionError` on the first failing check and otherwise
returns the values it measured. `run_verify` executes suites in registration
order and collects a `VerifyReport`.
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from adventurer import tensor as T
from adventurer.config import PRESETS, ModelConfig, published_size
from adventurer.errors import ConfigError
from adventurer.harness import oracles
from adventurer.harness.bench import (
    DEFAULT_LENGTHS,
    MIN_REPEATS,
    MIXERS,
    bench_scaling,
    mac_slope,
    strictly_increasing,
    time_ratios,
)
from adventurer.harness.data import ToyDataset
from adventurer.harness.sweep import AXIS_VALUES, apply_axis
from adventurer.harness.train import train_toy
from adventurer.layers.abc import ParamRecord
from adventurer.layers.attention import AttnLayerParams, attention_tensor
from adventurer.layers.mlp import ChannelMixerParams, channel_mixer_tensor
from adventurer.layers.norm import rms_norm_tensor
from adventurer.layers.ssd import (
    SsdLayerParams,
    mamba2_tensor,
    ssd_scan_chunked,
    ssd_scan_recurrent,
)
from adventurer.model import (
    cast_params,
    classify,
    count_params,
    fingerprint,
    forward_features,
    init_params,
)
from adventurer.rng import Rng
from adventurer.sequence import Role, TokenSequence, flip_patches, make_heading
from adventurer.tensor import Tensor
from adventurer.utils import rel_err

logger = logging.getLogger(__name__)

FAULTS = ("flip-disabled",)
FD_EPS = 1e-3
GRAD_FLOOR_RATIO = 1e-2
GRAD_FLOOR_ABS = 1e-7
MAC_LENGTHS = (128, 256, 512, 1024)
TIMING_REPEATS = 9


@dataclass
class VerifyContext:
    seed: int = 0
    quick: bool = False
    fault: Optional[str] = None

    def rng(self, name: str) -> Rng:
        return Rng(self.seed).split(f"verify.{name}")


@dataclass
class SuiteResult:
    name: str
    passed: bool
    seconds: float
    measured: Dict[str, object] = field(default_factory=dict)
    error: Optional[str] = None


@dataclass
class VerifyReport:
    results: List[SuiteResult] = field(default_factory=list)
    fault: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    @property
    def first_failure(self) -> Optional[SuiteResult]:
        return next((r for r in self.results if not r.passed), None)

    def summary_lines(self) -> List[str]:
        lines = []
        for r in self.results:
            status = "PASS" if r.passed else "FAIL"
            line = f"{status}  {r.name} ({r.seconds:.2f}s)"
            if r.error:
                line += f": {r.error}"
            lines.append(line)
        return lines

    def as_dict(self) -> Dict[str, object]:
        return {
            "passed": self.passed,
            "fault": self.fault,
            "suites": [
                {
                    "name": r.name,
                    "passed": r.passed,
                    "seconds": r.seconds,
                    "measured": r.measured,
                    "error": r.error,
                }
                for r in self.results
            ],
        }


Suite = Callable[[VerifyContext], Dict[str, object]]
SUITES: Dict[str, Suite] = {}


def suite(name: str) -> Callable[[Suite], Suite]:
    def register(fn: Suite) -> Suite:
        SUITES[name] = fn
        return fn

    return register


def expect(condition: bool, message: str) -> None:
    if not condition:
        raise AssertionError(message)


# --- Helpers ---
def _to_f64(record: ParamRecord) -> ParamRecord:
    for t in record.parameters():
        t.data = t.data.astype(np.float64)
    return record


def _randomize(record: ParamRecord, rng: Rng, std: float) -> ParamRecord:
    for i, t in enumerate(record.parameters()):
        t.data = rng.split(i).normal(t.shape, std=std, dtype=t.dtype)
    return record


def _f64(arr, requires_grad: bool = False) -> Tensor:
    return Tensor(arr, requires_grad=requires_grad, dtype=np.float64)


def _sample_coords(rng: Rng, shape, k: int) -> List[tuple]:
    size = int(np.prod(shape))
    flat = rng.permutation(size)[: min(k, size)]
    return [np.unravel_index(int(i), shape) for i in flat]


def _attention_oracle(x: np.ndarray, params: AttnLayerParams) -> np.ndarray:
    return oracles.oracle_masked_attention(
        x,
        params.q.weight,
        params.q.bias,
        params.k.weight,
        params.k.bias,
        params.v.weight,
        params.v.bias,
        params.out.weight,
        params.out.bias,
        params.n_heads,
        causal=params.mask_mode == "causal",
    )


def grad_check(
    loss_fn: Callable[[], Tensor],
    target: Tensor,
    coords: Sequence[tuple],
    floor: Optional[float] = None,
) -> float:
    """
    Max relative deviation between analytic and central-difference gradients.

    `loss_fn` is re-evaluated with `target.data` perturbed in place; the
    denominator of each ratio is floored at `floor`, or at a fraction of the
    largest analytic gradient entry when None.
    """
    target.zero_grad()
    T.backward(loss_fn())
    grad = np.zeros(target.shape) if target.grad is None else target.grad
    analytic = np.array([grad[c] for c in coords], dtype=np.float64)
    if floor is None:
        floor = max(GRAD_FLOOR_RATIO * float(np.max(np.abs(grad))), GRAD_FLOOR_ABS)
    original = target.data

    def f(x: np.ndarray) -> float:
        target.data = x
        with T.no_grad():
            return loss_fn().item()

    try:
        numeric = oracles.oracle_finite_difference(f, original, coords, FD_EPS)
    finally:
        target.data = original
    return float(np.max(oracles.rel_errors(analytic, numeric, floor)))


def _scan_inputs(rng: Rng, length: int, heads: int, p: int, n: int, groups: int, dtype):
    x = rng.split("x").normal((length, heads * p), dtype=dtype)
    dt = rng.split("dt").uniform(0.005, 0.1, (length, heads), dtype=dtype)
    B = rng.split("B").normal((length, groups, n), dtype=dtype)
    C = rng.split("C").normal((length, groups, n), dtype=dtype)
    a = -rng.split("a").uniform(0.2, 1.0, (heads,), dtype=dtype)
    D = rng.split("D").normal((heads * p,), dtype=dtype)
    return x, dt, B, C, a, D


def _tensors(arrays) -> List[Tensor]:
    return [Tensor(v, dtype=v.dtype) for v in arrays]


def _random_image(rng: Rng, cfg: ModelConfig, dtype=np.float32) -> np.ndarray:
    return rng.normal((cfg.in_channels, cfg.image_size, cfg.image_size), dtype=dtype)


# --- Suites ---
def _derived_gradients(rng: Rng, out: Dict[str, object]) -> None:
    with T.precision(np.float64):
        a = _f64(rng.split("a").uniform(-2, 2, (5, 7)), requires_grad=True)
        b = _f64(rng.split("b").uniform(-2, 2, (7, 3)), requires_grad=True)
        w = _f64(rng.split("w").uniform(-2, 2, (5, 3)))

        def matmul_loss() -> Tensor:
            return T.sum_(T.matmul(a, b) * w)

        err = max(
            grad_check(matmul_loss, a, list(np.ndindex(5, 7)), floor=1e-8),
            grad_check(matmul_loss, b, list(np.ndindex(7, 3)), floor=1e-8),
        )
        out["matmul_grad_rel_err"] = err
        expect(err <= 1e-3, f"matmul grad rel err {err:.3e}")

        x = _f64([1.5], requires_grad=True)
        err = grad_check(lambda: T.sum_(T.silu(x)), x, [(0,)], floor=1e-8)
        out["silu_grad_rel_err"] = err
        expect(err <= 1e-3, f"silu grad rel err {err:.3e}")

        m = _f64(rng.split("m").uniform(-2, 2, (4, 8)), requires_grad=True)
        wm = _f64(rng.split("wm").uniform(-2, 2, (4,)))
        err = grad_check(
            lambda: T.sum_(T.mean(m, axis=1) * wm),
            m,
            list(np.ndindex(4, 8)),
            floor=1e-8,
        )
        out["mean_grad_rel_err"] = err
        expect(err <= 1e-3, f"mean grad rel err {err:.3e}")

        ssd = _to_f64(SsdLayerParams.init(rng.split("ssd"), 8, 4, 4))
        xs = _f64(rng.split("ssd.x").normal((12, 8)))
        coords = _sample_coords(rng.split("ssd.coords"), ssd.in_proj.weight.shape, 32)
        err = grad_check(
            lambda: T.mean(mamba2_tensor(xs, ssd)), ssd.in_proj.weight, coords
        )
        out["mamba2_in_proj_grad_rel_err"] = err
        expect(err <= 5e-3, f"mamba2 in_proj grad rel err {err:.3e}")


def _derived_layers(rng: Rng, out: Dict[str, object]) -> None:
    with T.precision(np.float64):
        attn = _to_f64(AttnLayerParams.init(rng.split("attn"), 8, 2))
        attn = _randomize(attn, rng.split("attn.w"), 0.5)
        xa = rng.split("attn.x").normal((6, 8), dtype=np.float64)
        got = attention_tensor(_f64(xa), attn).data
        diff = np.abs(got - _attention_oracle(xa, attn))
        out["causal_attention_L6_max_abs"] = float(np.max(diff))
        expect(np.max(diff) <= 1e-5, "causal attention differs from masked oracle")

    arrays = _scan_inputs(rng.split("scan64"), 64, 2, 4, 4, 2, np.float32)
    got = ssd_scan_recurrent(*_tensors(arrays)).data
    err = rel_err(got, oracles.oracle_ssd_reference(*arrays))
    out["scan_recurrent_L64_rel_err"] = err
    expect(err <= 1e-4, f"recurrent scan vs 64-bit loop rel err {err:.3e}")

    arrays = _scan_inputs(rng.split("scan256"), 256, 2, 4, 4, 1, np.float32)
    want = oracles.oracle_ssd_reference(*arrays)
    for chunk in (16, 32, 64):
        err = rel_err(ssd_scan_chunked(*_tensors(arrays), chunk).data, want)
        out[f"scan_chunked_L256_c{chunk}_rel_err"] = err
        expect(err <= 1e-4, f"chunked scan (chunk {chunk}) rel err {err:.3e}")

    mixer = ChannelMixerParams.init(rng.split("swiglu"), "swiglu", 8)
    mixer = _randomize(mixer, rng.split("swiglu.w"), 0.5)
    xt = rng.split("swiglu.x").normal((1, 8))
    want = oracles.oracle_swiglu(
        xt, mixer.gate.weight, mixer.up.weight, mixer.down.weight
    )
    err = rel_err(channel_mixer_tensor(Tensor(xt), mixer).data, want)
    out["swiglu_rel_err"] = err
    expect(err <= 1e-5, f"swiglu vs scalar oracle rel err {err:.3e}")

    xt = rng.split("rms.x").normal((1, 16))
    scale = rng.split("rms.scale").normal((16,))
    got = rms_norm_tensor(Tensor(xt), Tensor(scale), 1e-5).data
    err = rel_err(got, oracles.oracle_rms_norm(xt, scale, 1e-5))
    out["rms_norm_rel_err"] = err
    expect(err <= 1e-5, f"rms_norm vs scalar oracle rel err {err:.3e}")

    roles = (Role.PATCH,) * 196 + (Role.CLS,)
    seq = TokenSequence(Tensor(rng.split("grid").normal((197, 8))), roles)
    heading = make_heading(seq, "grid", heading_tokens=4, grid_side=(14, 14)).data
    patches = seq.data.data[:196].astype(np.float64).reshape(14, 14, 8)
    cells = [
        patches[7 * ci : 7 * ci + 7, 7 * cj : 7 * cj + 7].mean(axis=(0, 1))
        for ci in range(2)
        for cj in range(2)
    ]
    err = rel_err(heading, np.stack(cells))
    out["grid4_cell_mean_rel_err"] = err
    expect(err <= 1e-6, f"grid(4) heading vs cell means rel err {err:.3e}")


@suite("derived-examples")
def derived_examples(ctx: VerifyContext) -> Dict[str, object]:
    """Small oracle-backed examples of the individual layers and operations."""
    out: Dict[str, object] = {}
    _derived_gradients(ctx.rng("derived.grad"), out)
    _derived_layers(ctx.rng("derived.layers"), out)
    return out


@suite("oracle-self-check")
def oracle_self_check(ctx: VerifyContext) -> Dict[str, object]:
    out: Dict[str, object] = {}
    x = ctx.rng("self-check").normal((20, 1), dtype=np.float64)
    ones = np.ones((20, 1, 1))
    prefix = oracles.oracle_ssd_reference(
        x, np.ones((20, 1)), ones, ones, np.zeros(1), np.zeros(1), unit_decay=True
    )
    expect(
        np.array_equal(prefix, np.cumsum(x, axis=0)),
        "degenerate SSD is not a prefix sum",
    )
    out["ssd_prefix_sum_exact"] = True

    eye, zero = np.eye(2), np.zeros(2)
    got = oracles.oracle_masked_attention(
        eye, eye, zero, eye, zero, eye, zero, eye, zero, 1
    )
    s = 1.0 / np.sqrt(2.0)
    p1 = np.exp(s) / (1.0 + np.exp(s))
    manual = np.array([[1.0, 0.0], [1.0 - p1, p1]])
    out["attention_hand_case_max_abs"] = float(np.max(np.abs(got - manual)))
    expect(out["attention_hand_case_max_abs"] <= 1e-12, "masked attention hand case")

    d = oracles.oracle_finite_difference(lambda v: float(v[0] ** 2), np.array([3.0]))
    out["finite_difference_x2_at_3"] = float(d[0])
    expect(abs(d[0] - 6.0) <= 1e-6, f"finite difference of x^2 at 3 gave {d[0]}")
    return out


@suite("param-count")
def param_count(ctx: VerifyContext) -> Dict[str, object]:
    out: Dict[str, object] = {}
    for name in ("tiny", "small", "base", "large"):
        count = count_params(PRESETS[name])
        target = published_size(name)
        deviation = (count - target) / target
        out[name] = {"count": count, "target": target, "deviation": deviation}
        expect(
            abs(deviation) <= 0.10,
            f"{name}: {count} parameters deviates {deviation:+.1%} from {target}",
        )
    return out


@suite("scan-equivalence")
def scan_equivalence(ctx: VerifyContext) -> Dict[str, object]:
    rng = ctx.rng("scan")
    instances = 20 if ctx.quick else 200
    max_len = 128 if ctx.quick else 512
    worst = 0.0
    for i in range(instances):
        r = rng.split(i)
        draw = r.split("extents").generator
        length = int(draw.integers(1, max_len + 1))
        heads = int(draw.integers(1, 4))
        p, n = int(draw.integers(1, 9)), int(draw.integers(1, 9))
        groups = heads if draw.integers(0, 2) else 1
        chunk = [1, 16, 32, 64, length][int(draw.integers(0, 5))]
        arrays = _tensors(_scan_inputs(r, length, heads, p, n, groups, np.float32))
        with T.no_grad():
            ref = ssd_scan_recurrent(*arrays).data
            got = ssd_scan_chunked(*arrays, chunk).data
        err = rel_err(got, ref)
        expect(
            err <= 1e-4,
            f"instance {i} (L={length}, chunk={chunk}): rel err {err:.3e}",
        )
        worst = max(worst, err)
    return {"instances": instances, "max_rel_err": worst}


@suite("mask-equivalence")
def mask_equivalence(ctx: VerifyContext) -> Dict[str, object]:
    rng = ctx.rng("mask")
    instances = 20 if ctx.quick else 100
    worst = 0.0
    with T.precision(np.float64):
        for i in range(instances):
            r = rng.split(i)
            draw = r.split("extents").generator
            length = int(draw.integers(1, 65))
            heads = int(draw.integers(1, 4))
            d = heads * int(draw.integers(1, 9))
            params = _to_f64(AttnLayerParams.init(r, d, heads))
            params = _randomize(params, r.split("w"), 1.0 / np.sqrt(d))
            x = r.split("x").normal((length, d), dtype=np.float64)
            with T.no_grad():
                got = attention_tensor(_f64(x), params).data
            err = float(np.max(np.abs(got - _attention_oracle(x, params))))
            expect(err <= 1e-5, f"instance {i} (L={length}): max abs diff {err:.3e}")
            worst = max(worst, err)
    return {"instances": instances, "max_abs_diff": worst}


@suite("vit-equivalence")
def vit_equivalence(ctx: VerifyContext) -> Dict[str, object]:
    rng = ctx.rng("vit")
    instances = 4 if ctx.quick else 20
    worst = 0.0
    base = PRESETS["micro"].with_values(
        {
            "token_mixer": "full-attn",
            "heading": "off",
            "flip": "off",
            "depth": 2,
            "attn_heads": 2,
        }
    )
    with T.precision(np.float64):
        for i in range(instances):
            cfg = base.with_values({"channel_mixer": ("swiglu", "plain-mlp")[i % 2]})
            params = cast_params(init_params(cfg, ctx.seed + i), cfg, np.float64)
            image = _random_image(rng.split(i), cfg, np.float64)
            with T.no_grad():
                got = forward_features(image, params, cfg).data.data
            weights = {k: t.data for k, t in params.named_tensors().items()}
            err = rel_err(got, oracles.oracle_plain_vit(image, weights, cfg))
            expect(err <= 1e-5, f"input {i} ({cfg.channel_mixer}): rel err {err:.3e}")
            worst = max(worst, err)
    return {"instances": instances, "max_rel_err": worst}


@suite("gradient-audit")
def gradient_audit(ctx: VerifyContext) -> Dict[str, object]:
    cfg = PRESETS["micro"]
    per_tensor = 4 if ctx.quick else 32
    rng = ctx.rng("grad")
    worst: Dict[str, float] = {}
    with T.precision(np.float64):
        params = cast_params(init_params(cfg, ctx.seed), cfg, np.float64)
        image = _random_image(rng.split("image"), cfg, np.float64)

        def loss() -> Tensor:
            logits = T.reshape(classify(image, params, cfg), (1, cfg.num_classes))
            return T.cross_entropy(logits, [1])

        for name, tensor in params.named_tensors().items():
            coords = _sample_coords(rng.split(name), tensor.shape, per_tensor)
            params.zero_grad()
            worst[name] = grad_check(loss, tensor, coords)
            expect(worst[name] <= 5e-3, f"{name}: gradient rel err {worst[name]:.3e}")
    return {
        "coords_per_tensor": per_tensor,
        "tensors": len(worst),
        "max_rel_err": max(worst.values()),
        "worst_tensor": max(worst, key=worst.get),
    }


def _check_invariants(cfg: ModelConfig, seed: int, rng: Rng) -> Dict[str, object]:
    params = init_params(cfg, seed)
    n, k = cfg.num_patches, cfg.num_heading
    boundary = (Role.PATCH,) * n + (Role.CLS,)
    stats = {"boundaries": 0, "heading_max_rel_err": 0.0}

    def observer(event: str, index: int, seq: TokenSequence) -> None:
        if event in ("block_input", "output"):
            expect(
                seq.roles == boundary, f"block {index}: roles not [patch x {n}, cls]"
            )
            twice = flip_patches(flip_patches(seq))
            expect(
                np.array_equal(twice.data.data, seq.data.data),
                f"block {index}: flip is not an involution",
            )
            stats["boundaries"] += 1
            return
        expect(
            seq.roles == (Role.AVG,) * k + boundary,
            f"block {index}: expected {k} heading tokens before the patches",
        )
        if cfg.heading == "average" and cfg.recalc_heading:
            data = seq.data.data.astype(np.float64)
            err = rel_err(data[0], data[1:].mean(axis=0))
            stats["heading_max_rel_err"] = max(stats["heading_max_rel_err"], err)
            expect(err <= 1e-6, f"block {index}: heading rel err {err:.3e}")

    with T.no_grad():
        forward_features(_random_image(rng, cfg), params, cfg, observer=observer)
    return stats


def _check_flip_parity(
    cfg: ModelConfig, depth: int, expect_flip: bool, seed: int, rng: Rng
) -> bool:
    cfg = cfg.with_values({"depth": depth})
    params = init_params(cfg, seed)
    for block in params.blocks:
        for t in block.parameters():
            t.data = np.zeros_like(t.data)
    seen: Dict[str, np.ndarray] = {}

    def observer(event: str, index: int, seq: TokenSequence) -> None:
        if event == "block_input" and index == 0:
            seen["input"] = seq.data.numpy()

    with T.no_grad():
        image = _random_image(rng, cfg)
        out = forward_features(image, params, cfg, observer=observer).data.data
    start = seen["input"]
    reversed_now = expect_flip and depth % 2 == 1
    expected = np.concatenate([start[:-1][::-1], start[-1:]]) if reversed_now else start
    order = "one reversal" if reversed_now else "identity order"
    expect(np.array_equal(out, expected), f"depth {depth}: expected {order}")
    return reversed_now


@suite("heading-flip")
def heading_flip(ctx: VerifyContext) -> Dict[str, object]:
    rng = ctx.rng("heading-flip")
    micro = PRESETS["micro"]
    out: Dict[str, object] = {}
    for size in (32, 64):
        cfg = micro.with_values({"image_size": size})
        stats = _check_invariants(cfg, ctx.seed, rng.split(size))
        out[f"L{cfg.num_patches + 1}"] = stats
    for variant in ("grid4", "duplicate-cls", "learnable"):
        cfg = apply_axis(micro, "heading_variant", variant)
        out[variant] = _check_invariants(cfg, ctx.seed, rng.split(variant))

    cfg, expect_flip = micro, micro.flip == "inter-layer"
    if ctx.fault == "flip-disabled":
        cfg = micro.with_values({"flip": "off"})
        expect_flip = True
    out["reversed_after_depth"] = {
        depth: _check_flip_parity(cfg, depth, expect_flip, ctx.seed, rng.split(depth))
        for depth in (1, 2, 3, 4)
    }
    return out


@suite("complexity")
def complexity(ctx: VerifyContext) -> Dict[str, object]:
    mac = {m: mac_slope(m, MAC_LENGTHS) for m in MIXERS}
    again = {m: mac_slope(m, MAC_LENGTHS) for m in mac}
    expect(mac == again, "MAC counts differ between runs")
    expect(abs(mac["mamba2"] - 1.0) <= 0.15, f"mamba2 MAC slope {mac['mamba2']:.3f}")
    causal = mac["causal-attn"]
    expect(abs(causal - 2.0) <= 0.15, f"causal-attn MAC slope {causal:.3f}")
    expect(mac["full-attn"] >= 1.7, f"full-attn MAC slope {mac['full-attn']:.3f}")

    lengths = (64, 128, 256) if ctx.quick else DEFAULT_LENGTHS
    repeats = MIN_REPEATS if ctx.quick else TIMING_REPEATS
    mamba = bench_scaling("mamba2", lengths, repeats=repeats, seed=ctx.seed)
    attn = bench_scaling("full-attn", lengths, repeats=repeats, seed=ctx.seed)
    ratios = time_ratios(attn, mamba)
    out = {
        "lengths": list(lengths),
        "mac_lengths": list(MAC_LENGTHS),
        "mac_slope": mac,
        "time_slope": {"mamba2": mamba.time_slope, "full-attn": attn.time_slope},
        "memory_slope": {"mamba2": mamba.memory_slope, "full-attn": attn.memory_slope},
        "time_ratio": ratios,
    }
    if ctx.quick:
        logger.info("Quick mode: timing and memory slopes recorded, not gated")
        return out
    expect(
        abs(mamba.time_slope - 1.0) <= 0.15,
        f"mamba2 time slope {mamba.time_slope:.3f}",
    )
    expect(
        abs(attn.time_slope - 2.0) <= 0.3,
        f"full-attn time slope {attn.time_slope:.3f}",
    )
    expect(
        len(ratios) == len(lengths) and strictly_increasing([r for _, r in ratios]),
        f"attn/mamba2 time ratio not strictly increasing: {ratios}",
    )
    expect(
        abs(mamba.memory_slope - 1.0) <= 0.2,
        f"mamba2 memory slope {mamba.memory_slope:.3f}",
    )
    expect(attn.memory_slope >= 1.7, f"full-attn memory slope {attn.memory_slope:.3f}")
    return out


def lattice_configs(base: ModelConfig) -> Dict[str, ModelConfig]:
    """Ablation grid cells keyed by a readable label, duplicates removed."""
    cells: Dict[str, ModelConfig] = {}
    for heading in AXIS_VALUES["heading"]:
        for flip in AXIS_VALUES["flip"]:
            values = {"heading": heading, "flip": flip}
            cells[f"heading={heading},flip={flip}"] = base.with_values(values)
    for mixer in AXIS_VALUES["channel_mixer"]:
        cells[f"channel_mixer={mixer}"] = base.with_values({"channel_mixer": mixer})
    for variant in AXIS_VALUES["heading_variant"]:
        cfg = apply_axis(base, "heading_variant", variant)
        cells[f"heading_variant={variant}"] = cfg
    cells["recalc_heading=false"] = base.with_values({"recalc_heading": False})

    unique: Dict[str, ModelConfig] = {}
    seen = set()
    for label, cfg in cells.items():
        if cfg.to_text() not in seen:
            seen.add(cfg.to_text())
            unique[label] = cfg
    return unique


@suite("ablation-lattice")
def ablation_lattice(ctx: VerifyContext) -> Dict[str, object]:
    base = PRESETS["micro"].with_values({"image_size": 24, "dim": 32, "depth": 2})
    data = ToyDataset.generate(count=4, image_size=24, seed=ctx.seed)
    prints: Dict[str, str] = {}
    for label, cfg in lattice_configs(base).items():
        trace = train_toy(cfg, data, steps=1, lr=0.01, seed=ctx.seed)
        expect(
            np.isfinite(trace.final_loss), f"{label}: non-finite loss after one step"
        )
        prints[label], _ = fingerprint(cfg, ctx.seed)
    duplicates = len(prints) - len(set(prints.values()))
    expect(duplicates == 0, f"{duplicates} lattice cells share an op-count fingerprint")
    return {"cells": len(prints), "fingerprints": prints}


@suite("trainability")
def trainability(ctx: VerifyContext) -> Dict[str, object]:
    cfg = PRESETS["micro"]
    data = ToyDataset.generate(count=32, num_classes=cfg.num_classes, seed=ctx.seed)
    steps = 30 if ctx.quick else 500
    trace = train_toy(cfg, data, steps=steps, seed=ctx.seed)
    expect(all(np.isfinite(trace.losses)), "non-finite training loss")
    if not ctx.quick:
        expect(
            trace.final_accuracy >= 0.95,
            f"train accuracy {trace.final_accuracy:.3f} < 0.95",
        )
    return {
        "steps": steps,
        "initial_loss": trace.losses[0],
        "final_loss": trace.final_loss,
        "final_accuracy": trace.final_accuracy,
    }


def run_verify(
    suites: Optional[Sequence[str]] = None,
    *,
    fault: Optional[str] = None,
    quick: bool = False,
    seed: int = 0,
) -> VerifyReport:
    """
    Execute the named suites (all when None) in registration order.

    Args:
        suites: Suite names to run.
        fault: Optional fault hook name from `FAULTS`.
        quick: Use reduced instance counts and skip wall-clock gates.
        seed: Root seed of every suite.

    Returns:
        VerifyReport: Pass/fail and measured values per suite.

    Raises:
        ConfigError: On an unknown suite or fault name.
    """
    names = list(suites) if suites else list(SUITES)
    unknown = [s for s in names if s not in SUITES]
    if unknown:
        raise ConfigError(
            f"Unknown suites {unknown}; valid suites: {', '.join(SUITES)}"
        )
    if fault is not None and fault not in FAULTS:
        raise ConfigError(f"Unknown fault {fault!r}; valid faults: {', '.join(FAULTS)}")
    ctx = VerifyContext(seed=seed, quick=quick, fault=fault)
    report = VerifyReport(fault=fault)
    for name in [s for s in SUITES if s in names]:
        logger.info(f"Running suite {name}")
        start = time.perf_counter()
        try:
            measured = SUITES[name](ctx)
            result = SuiteResult(name, True, time.perf_counter() - start, measured)
            logger.info(f"Suite {name} passed in {result.seconds:.2f}s")
        except AssertionError as e:
            logger.warning(f"Suite {name} failed: {e}")
            result = SuiteResult(name, False, time.perf_counter() - start, error=str(e))
        report.results.append(result)
    return report
