from adventurer.checkpoint import CheckpointStore, load_checkpoint, save_checkpoint
from adventurer.config import PRESETS, ModelConfig, preset
from adventurer.model import AdventurerParams, classify, count_params, init_params

__all__ = [
    "AdventurerParams",
    "CheckpointStore",
    "ModelConfig",
    "PRESETS",
    "classify",
    "count_params",
    "init_params",
    "load_checkpoint",
    "preset",
    "save_checkpoint",
]
