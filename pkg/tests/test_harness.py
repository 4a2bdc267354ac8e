# test_harness.py

import itertools
import json
import logging
import os

import numpy as np
import pytest
import pytest_asyncio

from adventurer.config import ModelConfig
from adventurer.errors import ConfigError
from adventurer.harness import oracles
from adventurer.harness.artifacts import (
    MANIFEST_NAME,
    ArtifactWriter,
    read_manifest,
    read_text,
)
from adventurer.harness.bench import (
    WARMUP,
    _time_ms,
    bench_scaling,
    mac_slope,
    strictly_increasing,
    time_ratios,
)
from adventurer.harness.data import ToyDataset
from adventurer.harness.sweep import (
    ablation_sweep,
    ablation_sweep_async,
    apply_axis,
    cell_configs,
    parse_axes,
)
from adventurer.harness.train import cosine_lr, train_toy
from adventurer.harness.verify import SUITES, run_verify

logging.basicConfig(
    level=logging.DEBUG, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s"
)

# --- Test Data ---
TOY_CONFIG = ModelConfig(
    depth=1, dim=16, patch_size=4, image_size=8, d_state=4, head_dim=8, num_classes=2
)


# --- Fixtures ---


@pytest.fixture
def toy_data():
    return ToyDataset.generate(count=4, num_classes=2, image_size=8, seed=0)


@pytest_asyncio.fixture
async def writer(tmp_path):
    """Provides an ArtifactWriter over a fresh output directory."""
    return ArtifactWriter(str(tmp_path / "run"))


# --- Data and training ---


class TestToyDataset:

    def test_shapes_and_balance(self):
        data = ToyDataset.generate(count=9, num_classes=3, image_size=8, seed=1)
        assert data.images.shape == (9, 3, 8, 8)
        assert data.images.dtype == np.float32
        assert sorted(np.bincount(data.labels)) == [3, 3, 3]
        assert len(data) == 9 and data.image_size == 8

    def test_deterministic(self):
        a = ToyDataset.generate(count=4, image_size=8, seed=5)
        b = ToyDataset.generate(count=4, image_size=8, seed=5)
        np.testing.assert_array_equal(a.images, b.images)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_invalid_extents(self):
        with pytest.raises(ConfigError):
            ToyDataset.generate(count=0)
        with pytest.raises(ConfigError):
            ToyDataset.generate(num_classes=1)


class TestTraining:

    def test_cosine_schedule(self):
        assert cosine_lr(0, 10, 0.1) == pytest.approx(0.1)
        assert cosine_lr(5, 10, 0.1) == pytest.approx(0.05)
        assert cosine_lr(10, 10, 0.1) == pytest.approx(0.0)

    def test_short_run(self, toy_data):
        trace = train_toy(TOY_CONFIG, toy_data, steps=3, lr=0.05)
        assert len(trace.losses) == 3 and len(trace.lrs) == 3
        assert all(np.isfinite(trace.losses))
        assert abs(trace.losses[0] - np.log(2.0)) < 0.2
        assert 0.0 <= trace.final_accuracy <= 1.0
        assert trace.params is not None

    def test_reproducible(self, toy_data):
        a = train_toy(TOY_CONFIG, toy_data, steps=2, seed=4)
        b = train_toy(TOY_CONFIG, toy_data, steps=2, seed=4)
        assert a.losses == b.losses

    def test_zero_learning_rate_keeps_loss(self, toy_data):
        trace = train_toy(TOY_CONFIG, toy_data, steps=3, lr=0.0)
        assert max(trace.losses) - min(trace.losses) <= 1e-6

    def test_minibatches(self, toy_data):
        trace = train_toy(TOY_CONFIG, toy_data, steps=3, batch_size=2)
        assert len(trace.losses) == 3

    def test_rejects_mismatched_data(self, toy_data):
        with pytest.raises(ConfigError):
            train_toy(TOY_CONFIG.with_values({"num_classes": 3}), toy_data, steps=1)
        with pytest.raises(ConfigError):
            train_toy(TOY_CONFIG.with_values({"image_size": 16}), toy_data, steps=1)


# --- Benchmarks ---


class TestBench:

    def test_records_per_length(self):
        result = bench_scaling("mamba2", (8, 16, 32), dim=16, repeats=5)
        forward = result.ok_records()
        assert [r.length for r in forward] == [8, 16, 32]
        assert strictly_increasing([r.macs for r in forward])
        assert result.records[-1].phase == "forward+backward"
        assert np.isfinite(result.time_slope)
        assert set(forward[0].as_row()) == {
            "config_id",
            "L",
            "ms_median",
            "peak_bytes",
            "macs",
        }

    @pytest.mark.parametrize(
        "lengths", [(8, 16), (16, 8, 32), (0, 8, 16), (1024, 2048, 8192)]
    )
    def test_invalid_lengths(self, lengths):
        with pytest.raises(ConfigError):
            bench_scaling("mamba2", lengths)

    def test_invalid_mixer_and_repeats(self):
        with pytest.raises(ConfigError):
            bench_scaling("rnn", (8, 16, 32))
        with pytest.raises(ConfigError):
            bench_scaling("mamba2", (8, 16, 32), repeats=2)

    def test_mac_slopes(self):
        lengths = (128, 256, 512, 1024)
        assert abs(mac_slope("mamba2", lengths) - 1.0) <= 0.15
        assert abs(mac_slope("causal-attn", lengths) - 2.0) <= 0.15

    def test_short_calls_are_looped_to_budget(self):
        calls = itertools.count()
        median, fastest = _time_ms(lambda: next(calls), 5, budget_ms=5.0)
        assert next(calls) > 5 + WARMUP + 1
        assert 0.0 < fastest <= median

    def test_min_time_used_for_slope(self):
        result = bench_scaling(
            "mamba2", (8, 16, 32), dim=16, budget_ms=5.0, with_backward=False
        )
        for r in result.ok_records():
            assert r.ms_min <= r.ms_median

    def test_time_ratios(self):
        attn = bench_scaling("full-attn", (8, 16, 32), repeats=5, with_backward=False)
        ssd = bench_scaling("mamba2", (8, 16, 32), repeats=5, with_backward=False)
        ratios = time_ratios(attn, ssd)
        assert [length for length, _ in ratios] == [8, 16, 32]
        assert all(r > 0 for _, r in ratios)


# --- Sweeps ---


class TestSweepAxes:

    def test_parse_axes(self):
        assert parse_axes("heading, flip") == ["heading", "flip"]
        with pytest.raises(ConfigError):
            parse_axes("heading,colour")
        with pytest.raises(ConfigError):
            parse_axes("flip,flip")

    def test_grid_variant(self):
        cfg = apply_axis(TOY_CONFIG, "heading_variant", "grid4")
        assert cfg.heading == "grid" and cfg.heading_tokens == 4

    def test_invalid_cell_carries_its_error(self):
        cells = dict(
            (c["heading_variant"], cfg)
            for c, cfg in cell_configs(TOY_CONFIG, ["heading_variant"])
        )
        assert isinstance(cells["grid9"], ConfigError)
        assert isinstance(cells["grid4"], ModelConfig)

    def test_cells_in_product_order(self):
        cells = cell_configs(TOY_CONFIG, ["heading", "flip"])
        assert [c for c, _ in cells] == [
            {"heading": "average", "flip": "inter-layer"},
            {"heading": "average", "flip": "off"},
            {"heading": "off", "flip": "inter-layer"},
            {"heading": "off", "flip": "off"},
        ]


@pytest.mark.asyncio
class TestAblationSweep:

    async def test_heading_by_flip(self, toy_data):
        """Two binary axes give four rows and a CSV with one line per row."""
        table = await ablation_sweep_async(
            TOY_CONFIG, ["heading", "flip"], toy_data, steps=2
        )
        assert len(table.rows) == 4
        assert not table.failed()
        lines = table.to_csv().splitlines()
        assert lines[0] == "heading,flip,final_loss,final_acc"
        assert len(lines) == 5

    async def test_failing_cell_is_recorded(self, toy_data):
        """A grid that cannot be cut is reported without stopping the sweep."""
        table = await ablation_sweep_async(
            TOY_CONFIG, ["heading_variant"], toy_data, steps=1
        )
        failed = table.failed()
        assert [r.cell["heading_variant"] for r in failed] == ["grid9"]
        assert "ConfigError" in failed[0].error
        assert len(table.rows) == 6


def test_sync_sweep_matches_async_order(toy_data):
    table = ablation_sweep(TOY_CONFIG, "flip", toy_data, steps=1)
    assert [r.cell["flip"] for r in table.rows] == ["inter-layer", "off"]


# --- Artifacts ---


@pytest.mark.asyncio
class TestArtifactWriter:

    async def test_csv_and_manifest(self, writer):
        """The manifest lists every artifact written before it."""
        await writer.write_csv("table.csv", ["a", "b"], [{"a": 1, "b": 2}])
        await writer.write_json("data.json", {"x": 1})
        await writer.write_manifest("params", TOY_CONFIG, 7, {"preset": "micro"})

        assert await read_text(writer.path("table.csv")) == "a,b\n1,2\n"
        manifest = await read_manifest(writer.path(MANIFEST_NAME))
        assert manifest["command"] == "params"
        assert manifest["seed"] == 7
        assert manifest["outputs"] == ["table.csv", "data.json"]
        assert ModelConfig.from_text(manifest["config"]) == TOY_CONFIG
        assert "hostname" in manifest["host"]

    async def test_no_partial_files_remain(self, writer):
        """Writes are renamed into place."""
        await writer.write_text("notes.txt", "hello")
        assert os.listdir(writer.out_dir) == ["notes.txt"]

    async def test_json_is_sorted(self, writer):
        """JSON artifacts use sorted keys."""
        path = await writer.write_json("d.json", {"b": 1, "a": 2})
        with open(path, encoding="utf-8") as f:
            text = f.read()
        assert text.index('"a"') < text.index('"b"')
        assert json.loads(text) == {"a": 2, "b": 1}


# --- Verification ---


class TestOracles:

    def test_finite_difference_of_square(self):
        d = oracles.oracle_finite_difference(
            lambda v: float(v[0] ** 2), np.array([3.0])
        )
        assert d[0] == pytest.approx(6.0)

    def test_rel_errors_floor(self):
        errs = oracles.rel_errors([1e-9], [0.0], floor=1e-3)
        assert errs[0] == pytest.approx(1e-6)


class TestRunVerify:

    def test_quick_cheap_suites_pass(self):
        report = run_verify(["oracle-self-check", "param-count"], quick=True)
        assert report.passed
        assert [r.name for r in report.results] == ["oracle-self-check", "param-count"]
        assert report.as_dict()["passed"] is True
        assert all(line.startswith("PASS") for line in report.summary_lines())

    def test_suites_run_in_registration_order(self):
        report = run_verify(["param-count", "oracle-self-check"], quick=True)
        order = list(SUITES)
        assert [r.name for r in report.results] == sorted(
            ["param-count", "oracle-self-check"], key=order.index
        )

    def test_complexity_gates_mac_slopes(self):
        report = run_verify(["complexity"], quick=True)
        assert report.passed, report.summary_lines()
        measured = report.results[0].measured
        assert measured["mac_lengths"] == [128, 256, 512, 1024]
        assert abs(measured["mac_slope"]["causal-attn"] - 2.0) <= 0.15
        assert abs(measured["mac_slope"]["mamba2"] - 1.0) <= 0.15

    def test_flip_fault_is_detected(self):
        report = run_verify(["heading-flip"], fault="flip-disabled", quick=True)
        assert not report.passed
        assert report.first_failure.name == "heading-flip"
        assert "depth 1" in report.first_failure.error

    def test_unknown_suite_or_fault(self):
        with pytest.raises(ConfigError):
            run_verify(["no-such-suite"])
        with pytest.raises(ConfigError):
            run_verify(["param-count"], fault="no-such-fault")
