"""
Model configuration (`ModelConfig`) and its flat key=value text form.

The text form is bijective with the dataclass fields: one `key=value` per line,
keys exactly the field names, `#` starting a comment.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional

from adventurer.errors import ConfigError

logger = logging.getLogger(__name__)

TOKEN_MIXERS = ("mamba2", "causal-attn", "full-attn")
CHANNEL_MIXERS = ("swiglu", "plain-mlp", "none")
HEADINGS = ("average", "grid", "duplicate-cls", "learnable", "off")
GRID_TOKENS = (1, 4, 9)
FLIPS = ("inter-layer", "off")
SCANS = ("one-way", "per-layer-bidirectional")
NORMS = ("rms", "none")
SWITCHES = ("on", "off")
SCAN_IMPLS = ("chunked", "recurrent")

_CHOICES = {
    "token_mixer": TOKEN_MIXERS,
    "channel_mixer": CHANNEL_MIXERS,
    "heading": HEADINGS,
    "flip": FLIPS,
    "scan": SCANS,
    "norm": NORMS,
    "conv1d": SWITCHES,
    "scan_impl": SCAN_IMPLS,
}
_POSITIVE = (
    "depth",
    "dim",
    "patch_size",
    "image_size",
    "in_channels",
    "num_classes",
    "d_state",
    "head_dim",
    "chunk_len",
)


@dataclass(frozen=True)
class ModelConfig:
    """
    Full architectural description of one model.

    Attributes:
        depth (int): Number of blocks.
        dim (int): Token width d.
        patch_size (int): Patch edge p in pixels.
        image_size (int): Square input edge h = w.
        in_channels (int): Image channels.
        token_mixer (str): mamba2 | causal-attn | full-attn.
        channel_mixer (str): swiglu | plain-mlp | none (a second token mixer
            takes the slot).
        heading (str): average | grid | duplicate-cls | learnable | off.
        heading_tokens (int): Number of grid cells N when heading is grid.
        recalc_heading (bool): Recompute the heading token in every block.
        flip (str): inter-layer | off.
        scan (str): one-way | per-layer-bidirectional.
        norm (str): rms | none.
        num_classes (int): Classifier outputs.
        d_state (int): SSD state width per head.
        head_dim (int): SSD channels per head.
        conv1d (str): on | off, the short causal convolution in the SSD mixer.
        scan_impl (str): chunked | recurrent.
        chunk_len (int): Chunk length for the chunked scan.
        attn_heads (int): Attention heads; 0 picks max(1, dim // 64).
        norm_eps (float): RMS norm epsilon.
    """

    depth: int = 4
    dim: int = 64
    patch_size: int = 4
    image_size: int = 32
    in_channels: int = 3
    token_mixer: str = "mamba2"
    channel_mixer: str = "swiglu"
    heading: str = "average"
    heading_tokens: int = 1
    recalc_heading: bool = True
    flip: str = "inter-layer"
    scan: str = "one-way"
    norm: str = "rms"
    num_classes: int = 2
    d_state: int = 16
    head_dim: int = 32
    conv1d: str = "off"
    scan_impl: str = "chunked"
    chunk_len: int = 64
    attn_heads: int = 0
    norm_eps: float = 1e-5

    def __post_init__(self):
        for key, choices in _CHOICES.items():
            if getattr(self, key) not in choices:
                raise ConfigError(f"{key}={getattr(self, key)!r} not in {choices}")
        for key in _POSITIVE:
            if getattr(self, key) <= 0:
                raise ConfigError(f"{key} must be positive, got {getattr(self, key)}")
        if self.image_size % self.patch_size:
            raise ConfigError(
                f"image_size {self.image_size} is not a multiple of "
                f"patch_size {self.patch_size}"
            )
        if self.heading == "grid" and self.heading_tokens not in GRID_TOKENS:
            raise ConfigError(f"heading_tokens must be one of {GRID_TOKENS}")
        if self.heading == "grid" and self.grid_side % math.isqrt(self.heading_tokens):
            side = self.grid_side
            raise ConfigError(
                f"Patch grid {side}x{side} cannot be divided into "
                f"{self.heading_tokens} equal cells"
            )
        if self.d_inner % self.head_dim:
            raise ConfigError(
                f"d_inner {self.d_inner} not divisible by head_dim {self.head_dim}"
            )
        if self.token_mixer != "mamba2" and self.dim % self.n_attn_heads:
            raise ConfigError(
                f"dim {self.dim} not divisible by {self.n_attn_heads} heads"
            )
        if self.norm_eps <= 0:
            raise ConfigError("norm_eps must be positive")

    # --- Derived extents ---
    @property
    def grid_side(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_patches(self) -> int:
        return self.grid_side**2

    @property
    def d_inner(self) -> int:
        return 2 * self.dim

    @property
    def n_ssd_heads(self) -> int:
        return self.d_inner // self.head_dim

    @property
    def n_attn_heads(self) -> int:
        return self.attn_heads or max(1, self.dim // 64)

    @property
    def num_heading(self) -> int:
        """Heading positions present inside a block."""
        if self.heading == "off":
            return 0
        return self.heading_tokens if self.heading == "grid" else 1

    # --- Text form ---
    def to_text(self) -> str:
        """Canonical flat text: fields in declaration order, one per line."""
        return "".join(
            f"{f.name}={_format_value(getattr(self, f.name))}\n"
            for f in dataclasses.fields(self)
        )

    @classmethod
    def from_text(cls, text: str) -> "ModelConfig":
        return cls().with_values(parse_values(text))

    @classmethod
    def from_file(cls, path: str) -> "ModelConfig":
        return cls().with_values(read_values(path))

    def with_values(self, values: Dict[str, object]) -> "ModelConfig":
        """Replace fields from a mapping, coercing strings by field type."""
        fields = {f.name: f for f in dataclasses.fields(self)}
        unknown = sorted(set(values) - set(fields))
        if unknown:
            raise ConfigError(
                f"Unknown config keys {unknown}; valid keys: {', '.join(fields)}"
            )
        coerced = {k: _coerce(k, fields[k].type, v) for k, v in values.items()}
        return dataclasses.replace(self, **coerced)

    def with_overrides(self, overrides: Iterable[str]) -> "ModelConfig":
        """Apply `key=value` strings such as those given by `--set`."""
        values = {}
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"Override {item!r} is not key=value")
            key, value = item.split("=", 1)
            values[key.strip()] = value.strip()
        return self.with_values(values)

    def as_dict(self) -> Dict[str, object]:
        return dataclasses.asdict(self)


def parse_values(text: str) -> Dict[str, str]:
    """Raw key=value strings of a flat config text, comments stripped."""
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"Line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def read_values(path: str) -> Dict[str, str]:
    with open(path, "r", encoding="utf-8") as f:
        return parse_values(f.read())


def field_names() -> List[str]:
    return [f.name for f in dataclasses.fields(ModelConfig)]


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce(key: str, kind, value):
    if not isinstance(value, str):
        return value
    kind = kind if isinstance(kind, str) else kind.__name__
    try:
        if kind == "bool":
            lowered = value.lower()
            if lowered not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return lowered in ("true", "1", "yes")
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
    except ValueError:
        raise ConfigError(f"Cannot parse {key}={value!r} as {kind}")
    return value


# --- Presets ---
PUBLISHED_SIZES: Dict[str, int] = {
    "tiny": 12_000_000,
    "small": 44_000_000,
    "base": 99_000_000,
    "large": 346_000_000,
}

_FULL_SCALE = dict(
    patch_size=16,
    image_size=224,
    num_classes=1000,
    d_state=64,
    head_dim=64,
    conv1d="on",
)

PRESETS: Dict[str, ModelConfig] = {
    "micro": ModelConfig(),
    "tiny": ModelConfig(depth=12, dim=256, **_FULL_SCALE),
    "small": ModelConfig(depth=12, dim=512, **_FULL_SCALE),
    "base": ModelConfig(depth=12, dim=768, **_FULL_SCALE),
    "large": ModelConfig(depth=24, dim=1024, **_FULL_SCALE),
}


def preset(name: str) -> ModelConfig:
    """Look up a named configuration."""
    try:
        return PRESETS[name.lower()]
    except KeyError:
        raise ConfigError(f"Unknown preset {name!r}; choose from {', '.join(PRESETS)}")


def published_size(name: str) -> Optional[int]:
    return PUBLISHED_SIZES.get(name.lower())
