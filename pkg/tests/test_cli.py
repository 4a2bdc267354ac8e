# test_cli.py

import csv
import json
import os

import pytest

from adventurer.__main__ import main
from adventurer.checkpoint import load_checkpoint
from adventurer.cli import (
    EXIT_FAILURE,
    EXIT_IO,
    EXIT_OK,
    EXIT_USAGE,
    CliInvocation,
    parse_lengths,
    resolve_config,
)
from adventurer.config import ModelConfig, preset
from adventurer.errors import ConfigError

# --- Test Data ---
TOY_FLAGS = [
    "--set",
    "depth=1",
    "--set",
    "dim=16",
    "--set",
    "image_size=8",
    "--set",
    "head_dim=16",
    "--set",
    "d_state=4",
]


def _read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def _read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


# --- Config resolution ---


class TestResolveConfig:

    def test_layers_preset_file_and_overrides(self, tmp_path):
        path = tmp_path / "model.cfg"
        path.write_text("depth=3\ndim=32\n", encoding="utf-8")
        inv = CliInvocation(
            "params", config_path=str(path), preset="tiny", overrides=["depth=5"]
        )
        cfg = resolve_config(inv)
        assert cfg.depth == 5
        assert cfg.dim == 32
        assert cfg.patch_size == preset("tiny").patch_size

    def test_manifest_config_wins(self):
        text = ModelConfig(depth=2).to_text()
        inv = CliInvocation("params", overrides=["depth=7"], config_text=text)
        assert resolve_config(inv).depth == 2

    def test_parse_lengths(self):
        assert parse_lengths("8, 16,32") == [8, 16, 32]
        with pytest.raises(ConfigError):
            parse_lengths("8,sixteen")


# --- Subcommands ---


class TestParams:

    def test_preset_count(self, tmp_path, capsys):
        out = str(tmp_path / "params")
        assert main(["params", "small", "--out", out]) == EXIT_OK
        printed = capsys.readouterr().out
        assert printed.startswith("small: ")
        assert "target 44,000,000" in printed
        assert _read_json(os.path.join(out, "params.json"))["preset"] == "small"
        manifest = _read_json(os.path.join(out, "manifest.json"))
        assert manifest["command"] == "params"
        assert manifest["outputs"] == ["params.json"]

    def test_config_file_drops_target(self, tmp_path, capsys):
        path = tmp_path / "deeper.cfg"
        path.write_text("depth=13\n", encoding="utf-8")
        out = str(tmp_path / "params")
        argv = ["params", "small", "--config", str(path), "--out", out]
        assert main(argv) == EXIT_OK
        assert "target" not in capsys.readouterr().out
        assert _read_json(os.path.join(out, "params.json"))["target"] is None

    def test_override_drops_target(self, tmp_path, capsys):
        argv = ["params", "small", "--set", "depth=13", "--out", str(tmp_path)]
        assert main(argv) == EXIT_OK
        assert "target" not in capsys.readouterr().out

    def test_unknown_key_is_usage_error(self, tmp_path):
        code = main(["params", "--set", "width=3", "--out", str(tmp_path)])
        assert code == EXIT_USAGE

    def test_unknown_preset_is_usage_error(self, tmp_path):
        assert main(["params", "gigantic", "--out", str(tmp_path)]) == EXIT_USAGE

    def test_bad_arguments_are_usage_errors(self, tmp_path):
        assert main(["launch"]) == EXIT_USAGE
        assert main(["params", "--seed", "abc"]) == EXIT_USAGE
        assert main(["params", "--log-level", "chatty"]) == EXIT_USAGE


class TestTrainToy:

    def _run(self, out_dir):
        argv = ["train-toy", "--steps", "2", "--count", "4", "--out", out_dir]
        return main(argv + TOY_FLAGS)

    def test_writes_trace_checkpoint_and_manifest(self, tmp_path):
        out = str(tmp_path / "train")
        assert self._run(out) == EXIT_OK
        rows = _read_csv(os.path.join(out, "train.csv"))
        assert [r["step"] for r in rows] == ["0", "1"]
        params, cfg = load_checkpoint(os.path.join(out, "model.ckpt"))
        assert cfg.depth == 1 and cfg.dim == 16
        assert params.num_params() > 0
        manifest = _read_json(os.path.join(out, "manifest.json"))
        assert manifest["outputs"] == ["train.csv", "model.ckpt"]

    def test_same_seed_same_bytes(self, tmp_path):
        first, second = str(tmp_path / "a"), str(tmp_path / "b")
        assert self._run(first) == EXIT_OK
        assert self._run(second) == EXIT_OK
        for name in ("train.csv", "model.ckpt"):
            with open(os.path.join(first, name), "rb") as f:
                a = f.read()
            with open(os.path.join(second, name), "rb") as f:
                b = f.read()
            assert a == b, name

    def test_replay_from_manifest(self, tmp_path):
        first, replay = str(tmp_path / "first"), str(tmp_path / "replay")
        assert self._run(first) == EXIT_OK
        manifest = os.path.join(first, "manifest.json")
        code = main(["train-toy", "--from-manifest", manifest, "--out", replay])
        assert code == EXIT_OK
        with open(os.path.join(first, "train.csv"), encoding="utf-8") as f:
            expected = f.read()
        with open(os.path.join(replay, "train.csv"), encoding="utf-8") as f:
            assert f.read() == expected

    def test_inspect_checkpoint(self, tmp_path, capsys):
        out = str(tmp_path / "train")
        assert self._run(out) == EXIT_OK
        capsys.readouterr()
        ckpt = os.path.join(out, "model.ckpt")
        inspect_out = str(tmp_path / "inspect")
        assert main(["inspect", ckpt, "--out", inspect_out]) == EXIT_OK
        printed = capsys.readouterr().out
        assert "version 1" in printed
        assert "cls_token" in printed
        rows = _read_csv(os.path.join(inspect_out, "inspect.csv"))
        assert {"name": "cls_token", "shape": "1x16", "size": "16"} in rows


class TestInspectErrors:

    def test_missing_file(self, tmp_path):
        missing = str(tmp_path / "nothing.ckpt")
        assert main(["inspect", missing, "--out", str(tmp_path)]) == EXIT_IO

    def test_corrupt_file(self, tmp_path):
        path = tmp_path / "bad.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        assert main(["inspect", str(path), "--out", str(tmp_path)]) == EXIT_IO


class TestBenchAndSweep:

    def test_bench_rows_per_mixer(self, tmp_path):
        out = str(tmp_path / "bench")
        argv = ["bench", "--lengths", "8,16,32", "--set", "dim=16", "--out", out]
        assert main(argv) == EXIT_OK
        rows = _read_csv(os.path.join(out, "bench.csv"))
        assert len(rows) == 9
        assert list(rows[0]) == ["config_id", "L", "ms_median", "peak_bytes", "macs"]
        for mixer in ("mamba2", "causal-attn", "full-attn"):
            lengths = [r["L"] for r in rows if r["config_id"] == mixer]
            assert lengths == ["8", "16", "32"]

    def test_bench_rejects_two_lengths(self, tmp_path):
        argv = ["bench", "--lengths", "8,16", "--out", str(tmp_path)]
        assert main(argv) == EXIT_USAGE

    def test_sweep_table(self, tmp_path):
        out = str(tmp_path / "sweep")
        argv = ["sweep", "--axes", "heading,flip", "--steps", "1", "--count", "4"]
        assert main(argv + TOY_FLAGS + ["--out", out]) == EXIT_OK
        rows = _read_csv(os.path.join(out, "sweep.csv"))
        assert len(rows) == 4
        assert {(r["heading"], r["flip"]) for r in rows} == {
            ("average", "inter-layer"),
            ("average", "off"),
            ("off", "inter-layer"),
            ("off", "off"),
        }

    def test_sweep_unknown_axis(self, tmp_path):
        argv = ["sweep", "--axes", "colour", "--out", str(tmp_path)]
        assert main(argv + TOY_FLAGS) == EXIT_USAGE


class TestVerify:

    def test_quick_suite_passes(self, tmp_path, capsys):
        out = str(tmp_path / "verify")
        argv = ["verify", "--suite", "param-count", "--quick", "--out", out]
        assert main(argv) == EXIT_OK
        assert "PASS  param-count" in capsys.readouterr().out
        assert _read_json(os.path.join(out, "verify.json"))["passed"] is True

    def test_fault_fails_with_first_failure(self, tmp_path, capsys):
        argv = [
            "verify",
            "--suite",
            "heading-flip",
            "--fault",
            "flip-disabled",
            "--quick",
            "--out",
            str(tmp_path),
        ]
        assert main(argv) == EXIT_FAILURE
        assert "First failure: heading-flip" in capsys.readouterr().out

    def test_unknown_suite(self, tmp_path):
        argv = ["verify", "--suite", "nope", "--out", str(tmp_path)]
        assert main(argv) == EXIT_USAGE
