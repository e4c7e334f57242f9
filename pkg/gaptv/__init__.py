"""GapTV: gap-statistic grid selection with graph total-variation fitting."""
from .data_and_types import (
    Dataset, FitConfig, FitMethod, GapConfig, GapMode, LambdaSelection, LossKind, Model,
    SolverSettings,
)
from .pipeline import fit, predict

__version__ = "0.1.0"
