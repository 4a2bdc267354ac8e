import pytest

from adventurer.config import (
    PRESETS,
    ModelConfig,
    field_names,
    parse_values,
    preset,
    published_size,
    read_values,
)
from adventurer.errors import ConfigError


class TestModelConfig:

    def test_text_form_round_trips(self):
        cfg = ModelConfig(depth=3, heading="grid", heading_tokens=4, norm_eps=1e-6)
        again = ModelConfig.from_text(cfg.to_text())
        assert again == cfg
        assert again.to_text() == cfg.to_text()

    def test_text_lists_every_field_in_order(self):
        keys = [line.split("=")[0] for line in ModelConfig().to_text().splitlines()]
        assert keys == field_names()

    def test_comments_and_blank_lines(self):
        cfg = ModelConfig.from_text("# tiny run\n\ndepth = 2  # two blocks\n")
        assert cfg.depth == 2

    def test_booleans(self):
        assert not ModelConfig.from_text("recalc_heading=false").recalc_heading
        with pytest.raises(ConfigError):
            ModelConfig.from_text("recalc_heading=maybe")

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="Unknown config keys"):
            ModelConfig().with_overrides(["width=3"])

    def test_malformed_override(self):
        with pytest.raises(ConfigError):
            ModelConfig().with_overrides(["depth"])
        with pytest.raises(ConfigError):
            parse_values("depth 3")

    def test_bad_number(self):
        with pytest.raises(ConfigError):
            ModelConfig().with_overrides(["dim=wide"])

    @pytest.mark.parametrize(
        "values",
        [
            {"token_mixer": "rnn"},
            {"depth": 0},
            {"image_size": 30},
            {"heading": "grid", "heading_tokens": 2},
            {"heading": "grid", "heading_tokens": 9},
            {"heading": "grid", "heading_tokens": 4, "image_size": 12},
            {"dim": 16, "head_dim": 12},
            {"token_mixer": "causal-attn", "dim": 16, "attn_heads": 3},
            {"norm_eps": 0.0},
        ],
    )
    def test_rejects_invalid_values(self, values):
        with pytest.raises(ConfigError):
            ModelConfig().with_values(values)

    def test_derived_extents(self):
        cfg = ModelConfig(dim=64, head_dim=32, image_size=32, patch_size=4)
        assert cfg.num_patches == 64
        assert cfg.d_inner == 128
        assert cfg.n_ssd_heads == 4
        assert cfg.n_attn_heads == 1
        assert ModelConfig(heading="off").num_heading == 0

    def test_read_values_from_file(self, tmp_path):
        path = tmp_path / "model.cfg"
        path.write_text("dim=32\nhead_dim=16\n", encoding="utf-8")
        assert read_values(str(path)) == {"dim": "32", "head_dim": "16"}
        assert ModelConfig.from_file(str(path)).dim == 32


class TestPresets:

    def test_lookup_is_case_insensitive(self):
        assert preset("Tiny") is PRESETS["tiny"]
        assert published_size("TINY") == 12_000_000
        assert published_size("micro") is None

    def test_unknown_preset(self):
        with pytest.raises(ConfigError):
            preset("huge")


class TestGridHeading:

    def test_grid_must_divide_patch_grid(self):
        with pytest.raises(ConfigError, match="cannot be divided into 9"):
            ModelConfig(heading="grid", heading_tokens=9)

    def test_divisible_grids_accepted(self):
        assert ModelConfig(heading="grid", heading_tokens=4).grid_side == 8
        cfg = ModelConfig(heading="grid", heading_tokens=9, image_size=24)
        assert cfg.num_heading == 9
