"""Synthetic cohorts that follow the seven-segment task-density design.

Each subject runs one ordering of seven 450 s segments over three workload
levels, in which every ordered level transition occurs exactly once. Each
component is its segment's base level (linearly ramped into a new segment)
plus AR(1) noise; ``overall`` is the sum of the seven components.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from importlib import resources
from typing import Mapping, Sequence

import numpy as np
import yaml

from .data import COMPONENTS, SubjectSeries, WorkloadComponent, validate_series
from .errors import ConfigError, ValidationError
from .seeding import derive_seed

N_SEGMENTS = 7


class WorkloadLevel(enum.Enum):
    UNDERLOAD = "underload"
    NORMAL = "normal"
    OVERLOAD = "overload"


LEVELS: tuple[WorkloadLevel, ...] = tuple(WorkloadLevel)
Ordering = tuple  # tuple[WorkloadLevel, ...] of length 7


def is_valid_ordering(ordering: Sequence[WorkloadLevel]) -> bool:
    if len(ordering) != N_SEGMENTS:
        return False
    pairs = list(zip(ordering[:-1], ordering[1:]))
    if any(a == b for a, b in pairs):
        return False
    expected = {(a, b) for a in LEVELS for b in LEVELS if a != b}
    return len(pairs) == len(expected) and set(pairs) == expected


def enumerate_orderings() -> list[Ordering]:
    """All valid orderings, sorted lexicographically by level position."""
    idx = {lvl: i for i, lvl in enumerate(LEVELS)}
    found = []

    def extend(path, used):
        if len(path) == N_SEGMENTS:
            found.append(tuple(path))
            return
        for nxt in LEVELS:
            edge = (path[-1], nxt)
            if nxt != path[-1] and edge not in used:
                extend(path + [nxt], used | {edge})

    for first in LEVELS:
        extend([first], frozenset())
    return sorted(found, key=lambda o: [idx[l] for l in o])


@dataclass(frozen=True)
class SynthParams:
    base_levels: Mapping[WorkloadLevel, Mapping[WorkloadComponent, float]]
    segment_duration_s: float = 450.0
    sample_period_s: float = 5.0
    ar1_coefficient: float = 0.9
    noise_sd: float = 0.05
    transition_ramp_s: float = 450.0
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.ar1_coefficient < 1:
            raise ValidationError("ar1_coefficient must lie in [0, 1)")
        if self.noise_sd < 0 or self.transition_ramp_s < 0:
            raise ValidationError("noise_sd and transition_ramp_s must be >= 0")
        for name in ("segment_samples", "ramp_samples"):
            getattr(self, name)
        for lvl in LEVELS:
            if lvl not in self.base_levels or any(c not in self.base_levels[lvl] for c in COMPONENTS):
                raise ValidationError(f"base_levels lacks entries for {lvl.value}")

    @property
    def segment_samples(self) -> int:
        return _whole_samples(self.segment_duration_s, self.sample_period_s, "segment_duration_s")

    @property
    def ramp_samples(self) -> int:
        return _whole_samples(self.transition_ramp_s, self.sample_period_s, "transition_ramp_s")

    @classmethod
    def from_mapping(cls, doc: Mapping) -> "SynthParams":
        try:
            levels = {WorkloadLevel(lvl): {WorkloadComponent.parse(c): float(v) for c, v in comps.items()}
                      for lvl, comps in doc["base_levels"].items()}
            fields = {k: doc[k] for k in ("segment_duration_s", "sample_period_s", "ar1_coefficient",
                                          "noise_sd", "transition_ramp_s", "seed") if k in doc}
            return cls(base_levels=levels, **fields)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"bad synth parameters: {exc}") from exc

    @classmethod
    def default(cls, **overrides) -> "SynthParams":
        return replace(cls.from_mapping(load_default_config()["synth"]), **overrides)


def _whole_samples(duration: float, period: float, name: str) -> int:
    k = duration / period
    if abs(k - round(k)) > 1e-9:
        raise ValidationError(f"{name}={duration} is not a multiple of the {period} s period")
    return int(round(k))


def load_default_config() -> dict:
    text = resources.files("workload_forecast").joinpath("configs/default.yaml").read_text(encoding="utf-8")
    return yaml.safe_load(text)


def level_profile(ordering: Sequence[WorkloadLevel], p: SynthParams, comp: WorkloadComponent) -> np.ndarray:
    """Noise-free base trace of one component: piecewise constant with ramps."""
    seg, ramp = p.segment_samples, p.ramp_samples
    levels = [p.base_levels[lvl][comp] for lvl in ordering]
    out = np.repeat(np.asarray(levels, dtype=np.float64), seg)
    for j in range(1, len(levels)):
        start = j * seg
        k = np.arange(1, min(ramp, seg) + 1)
        out[start:start + len(k)] = levels[j - 1] + (levels[j] - levels[j - 1]) * k / (ramp + 1)
    return out


def ar1_noise(n: int, phi: float, sd: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) path: x[0] ~ N(0, sd^2 / (1 - phi^2)), x[t] = phi x[t-1] + sd z[t]."""
    z = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = z[0] * sd / np.sqrt(1.0 - phi * phi)
    for t in range(1, n):
        x[t] = phi * x[t - 1] + sd * z[t]
    return x


def synthesize_subject(ordering: Sequence[WorkloadLevel], p: SynthParams, subject_id: str) -> SubjectSeries:
    if not is_valid_ordering(ordering):
        raise ValidationError(f"invalid ordering {[l.value for l in ordering]}")
    channels = {}
    for ci, comp in enumerate(COMPONENTS):
        rng = np.random.default_rng(derive_seed(p.seed, subject_id, ci))
        base = level_profile(ordering, p, comp)
        channels[comp] = base + ar1_noise(len(base), p.ar1_coefficient, p.noise_sd, rng)
    total = np.zeros_like(channels[COMPONENTS[0]])
    for comp in COMPONENTS:
        total = total + channels[comp]
    channels[WorkloadComponent.OVERALL] = total
    series = SubjectSeries(subject_id, channels, sample_period_s=p.sample_period_s, start_time_s=0.0)
    validate_series(series)
    return series


def synthesize_cohort(n_subjects: int, p: SynthParams) -> list[SubjectSeries]:
    """Subjects ``s00, s01, ...`` cycle round-robin through the orderings."""
    if n_subjects < 1:
        raise ValidationError("n_subjects must be >= 1")
    orderings = enumerate_orderings()
    width = max(2, len(str(n_subjects - 1)))
    out = []
    for i in range(n_subjects):
        sub = replace(p, seed=derive_seed(p.seed, i))
        out.append(synthesize_subject(orderings[i % len(orderings)], sub, f"s{i:0{width}d}"))
    return out
