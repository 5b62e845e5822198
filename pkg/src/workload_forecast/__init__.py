"""Lag-horizon study toolkit for human workload forecasting."""

from .data import SubjectSeries, WorkloadComponent, parse_series_csv, serialize_series_csv, validate_series
from .kernels import BACKEND as KERNEL_BACKEND
from .mlp import MlpModel, TrainConfig, forward, init_mlp, loss_and_gradients, train_early_stopping
from .stats import classify_band, friedman_test, spearman_rho, wilcoxon_signed_rank
from .synth import SynthParams, enumerate_orderings, synthesize_cohort, synthesize_subject
from .windows import ForecastMode, HorizonConfig, build_windows, partition_blocked_folds, plan_loso_cv

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND", "ForecastMode", "HorizonConfig", "MlpModel", "SubjectSeries", "SynthParams",
    "TrainConfig", "WorkloadComponent", "build_windows", "classify_band", "enumerate_orderings",
    "forward", "friedman_test", "init_mlp", "loss_and_gradients", "parse_series_csv",
    "partition_blocked_folds", "plan_loso_cv", "serialize_series_csv", "spearman_rho",
    "synthesize_cohort", "synthesize_subject", "train_early_stopping", "validate_series",
    "wilcoxon_signed_rank",
]
