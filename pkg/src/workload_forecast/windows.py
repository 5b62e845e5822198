"""Direct-forecast windowing and leave-one-subject-out blocked CV planning."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .data import COMPONENTS, BASE_PERIOD_S, SeriesMeta, SubjectSeries, WorkloadComponent
from .errors import InsufficientData, NoTrainingSubjects, TooFewSamples, ValidationError

LAG_GRID_S = (30, 60, 120, 240)
PRED_GRID_S = (60, 120, 240)
MAX_SPAN_S = 600
N_FOLDS = 5
MIN_WINDOWS_PER_FOLD = 24


@dataclass(frozen=True)
class HorizonConfig:
    lag_s: int
    pred_s: int
    step_s: float = BASE_PERIOD_S

    def __post_init__(self):
        for name in ("lag_s", "pred_s"):
            val = getattr(self, name)
            k = val / self.step_s
            if val <= 0 or abs(k - round(k)) > 1e-9:
                raise ValidationError(f"{name}={val} is not a positive multiple of {self.step_s} s")
        if self.lag_s + self.pred_s > MAX_SPAN_S:
            raise ValidationError(f"lag_s + pred_s = {self.lag_s + self.pred_s} exceeds {MAX_SPAN_S} s")

    @property
    def lag_samples(self) -> int:
        return round(self.lag_s / self.step_s)

    @property
    def pred_samples(self) -> int:
        return round(self.pred_s / self.step_s)

    @property
    def span(self) -> int:
        """Samples covered by one window, features through target."""
        return self.lag_samples + self.pred_samples


class ModeKind(enum.Enum):
    UNIVARIATE = "univariate"
    MULTIVARIATE = "multivariate"


@dataclass(frozen=True)
class ForecastMode:
    kind: ModeKind
    target: WorkloadComponent

    @property
    def inputs(self) -> tuple[WorkloadComponent, ...]:
        if self.kind is ModeKind.UNIVARIATE:
            return (self.target,)
        return COMPONENTS

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @classmethod
    def univariate(cls, target=WorkloadComponent.OVERALL) -> "ForecastMode":
        return cls(ModeKind.UNIVARIATE, target)

    @classmethod
    def multivariate(cls, target=WorkloadComponent.OVERALL) -> "ForecastMode":
        return cls(ModeKind.MULTIVARIATE, target)


@dataclass(frozen=True)
class WindowSample:
    features: np.ndarray
    target: float
    target_index: int
    subject_id: str


@dataclass(frozen=True)
class WindowBatch:
    """Column-stacked windows; the representation training actually consumes.

    ``target_index`` is absolute into the source series.
    """

    features: np.ndarray
    targets: np.ndarray
    target_index: np.ndarray
    subject_ids: tuple[str, ...]

    def __len__(self):
        return len(self.targets)

    def samples(self) -> list[WindowSample]:
        return [WindowSample(self.features[i], float(self.targets[i]), int(self.target_index[i]),
                             self.subject_ids[i]) for i in range(len(self))]

    @classmethod
    def from_samples(cls, samples: Sequence[WindowSample]) -> "WindowBatch":
        if not samples:
            raise InsufficientData("no windows")
        return cls(np.vstack([s.features for s in samples]),
                   np.array([s.target for s in samples], dtype=np.float64),
                   np.array([s.target_index for s in samples], dtype=np.int64),
                   tuple(s.subject_id for s in samples))

    @classmethod
    def concat(cls, batches: Iterable["WindowBatch"]) -> "WindowBatch":
        batches = list(batches)
        if not batches:
            raise InsufficientData("no windows")
        return cls(np.vstack([b.features for b in batches]),
                   np.concatenate([b.targets for b in batches]),
                   np.concatenate([b.target_index for b in batches]),
                   sum((b.subject_ids for b in batches), ()))


def window_count(n_range: int, cfg: HorizonConfig) -> int:
    return n_range - cfg.lag_samples - cfg.pred_samples + 1


def build_window_batch(s: SubjectSeries, cfg: HorizonConfig, mode: ForecastMode,
                       range_: tuple[int, int] | None = None) -> WindowBatch:
    start, stop = (0, s.n_samples) if range_ is None else range_
    if not 0 <= start < stop <= s.n_samples:
        raise ValidationError(f"range [{start}, {stop}) outside series of length {s.n_samples}")
    count = window_count(stop - start, cfg)
    if count < 1:
        raise InsufficientData(
            f"{s.subject_id}: {stop - start} samples cannot hold a {cfg.lag_samples}+{cfg.pred_samples} window")
    x = s.matrix(mode.inputs)[:, start:stop]
    y = s.channel(mode.target)[start:stop]
    feats, targs = kernels.gather_windows(x, y, cfg.lag_samples, cfg.pred_samples)
    idx = start + cfg.lag_samples - 1 + cfg.pred_samples + np.arange(count, dtype=np.int64)
    return WindowBatch(feats, targs, idx, (s.subject_id,) * count)


def build_windows(s: SubjectSeries, cfg: HorizonConfig, mode: ForecastMode,
                  range_: tuple[int, int] | None = None) -> list[WindowSample]:
    """Window i: samples [i, i+lag) of each input channel -> target at i+lag-1+pred."""
    return build_window_batch(s, cfg, mode, range_).samples()


@dataclass(frozen=True)
class FoldPlan:
    boundaries: tuple[int, ...]

    @property
    def k(self) -> int:
        return len(self.boundaries) - 1

    def blocks(self) -> list[tuple[int, int]]:
        b = self.boundaries
        return [(b[i], b[i + 1]) for i in range(self.k)]


def partition_blocked_folds(n_samples: int, k: int = N_FOLDS) -> FoldPlan:
    if k < 1:
        raise ValidationError("k must be at least 1")
    if n_samples < k:
        raise TooFewSamples(f"{n_samples} samples cannot form {k} blocks")
    base, extra = divmod(n_samples, k)
    sizes = [base + (1 if i < extra else 0) for i in range(k)]
    return FoldPlan(tuple(np.concatenate([[0], np.cumsum(sizes)]).tolist()))


def check_eligibility(meta: SeriesMeta, cfg: HorizonConfig, k: int = N_FOLDS,
                      min_windows_per_fold: int = MIN_WINDOWS_PER_FOLD) -> bool:
    # the smallest block has floor(n/k) samples
    return meta.n_samples // k >= cfg.lag_samples + cfg.pred_samples - 1 + min_windows_per_fold


@dataclass(frozen=True)
class CvTask:
    test_subject: str
    train_subjects: frozenset[str]
    fold_plan: FoldPlan
    config: HorizonConfig
    mode: ForecastMode = field(default_factory=ForecastMode.univariate)

    def __post_init__(self):
        if self.test_subject in self.train_subjects:
            raise ValidationError("test subject appears in its own training set")
        if not self.train_subjects:
            raise NoTrainingSubjects("empty training set")


def plan_loso_cv(cohort: Sequence[SeriesMeta], cfg: HorizonConfig, mode: ForecastMode,
                 k: int = N_FOLDS, min_windows_per_fold: int = MIN_WINDOWS_PER_FOLD) -> list[CvTask]:
    eligible = sorted((m for m in cohort if check_eligibility(m, cfg, k, min_windows_per_fold)),
                      key=lambda m: m.subject_id)
    if len(eligible) < 2:
        raise NoTrainingSubjects(
            f"{len(eligible)} eligible subject(s) for lag {cfg.lag_s} s / pred {cfg.pred_s} s; need 2")
    ids = frozenset(m.subject_id for m in eligible)
    return [CvTask(m.subject_id, ids - {m.subject_id}, partition_blocked_folds(m.n_samples, k), cfg, mode)
            for m in eligible]
