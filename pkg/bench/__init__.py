"""Synthetic plateau-world benchmark for GapTV and its baselines."""
from .plateau_world import PlateauWorld, gen_plateau_world, sample_observations
from .benchmark import (
    BenchmarkReport, BenchmarkRow, QScanResult, QScanRow, q_scan_study, run_benchmark,
)
