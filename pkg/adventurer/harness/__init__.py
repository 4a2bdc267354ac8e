from adventurer.harness.artifacts import ArtifactWriter, read_manifest
from adventurer.harness.bench import BenchRecord, ScalingResult, bench_scaling
from adventurer.harness.data import ToyDataset
from adventurer.harness.sweep import SweepTable, ablation_sweep, ablation_sweep_async
from adventurer.harness.train import TrainTrace, train_toy
from adventurer.harness.verify import VerifyReport, run_verify

__all__ = [
    "ArtifactWriter",
    "BenchRecord",
    "ScalingResult",
    "SweepTable",
    "ToyDataset",
    "TrainTrace",
    "VerifyReport",
    "ablation_sweep",
    "ablation_sweep_async",
    "bench_scaling",
    "read_manifest",
    "run_verify",
    "train_toy",
]
