"""Workload time-series data model and the series CSV format.

A series CSV has the header::

    time_s,cognitive,visual,auditory,speech,gross_motor,fine_motor,tactile,overall

with one row per sample on a strictly increasing, uniformly spaced time grid.
A cohort is a directory of ``<subject_id>.csv`` files.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, TextIO

import numpy as np

from .errors import (
    ChannelLengthMismatch,
    EmptySeries,
    IoFailure,
    MissingColumn,
    NonFiniteValue,
    NonUniformGrid,
    ValidationError,
)

BASE_PERIOD_S = 5.0
GRID_TOL_S = 1e-6


class WorkloadComponent(enum.Enum):
    COGNITIVE = "cognitive"
    VISUAL = "visual"
    AUDITORY = "auditory"
    SPEECH = "speech"
    GROSS_MOTOR = "gross_motor"
    FINE_MOTOR = "fine_motor"
    TACTILE = "tactile"
    OVERALL = "overall"

    @classmethod
    def parse(cls, name: str) -> "WorkloadComponent":
        key = name.strip().lower().replace("-", "_").replace(" ", "_")
        aliases = {"grossmotor": "gross_motor", "finemotor": "fine_motor"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ValidationError(f"unknown workload component {name!r}") from None


# canonical order; used for CSV columns and feature flattening
ALL_CHANNELS: tuple[WorkloadComponent, ...] = tuple(WorkloadComponent)
COMPONENTS: tuple[WorkloadComponent, ...] = ALL_CHANNELS[:7]
CSV_HEADER: tuple[str, ...] = ("time_s",) + tuple(c.value for c in ALL_CHANNELS)


@dataclass(frozen=True)
class SubjectSeries:
    """One subject's uniformly sampled workload trace (7 components + overall).

    Construction does not validate; use :func:`validate_series` (parsing and
    synthesis always do).
    """

    subject_id: str
    channels: Mapping[WorkloadComponent, np.ndarray]
    sample_period_s: float = BASE_PERIOD_S
    start_time_s: float = 0.0

    def __post_init__(self):
        frozen = {}
        for comp, values in self.channels.items():
            arr = np.array(values, dtype=np.float64)
            arr.setflags(write=False)
            frozen[WorkloadComponent(comp)] = arr
        object.__setattr__(self, "channels", frozen)

    @property
    def n_samples(self) -> int:
        return len(self.channels[WorkloadComponent.OVERALL])

    def channel(self, comp: WorkloadComponent) -> np.ndarray:
        return self.channels[comp]

    def times(self) -> np.ndarray:
        return self.start_time_s + np.arange(self.n_samples) * self.sample_period_s

    def matrix(self, comps: Iterable[WorkloadComponent]) -> np.ndarray:
        """Stack the requested channels into a ``(n_channels, N)`` array."""
        return np.vstack([self.channels[c] for c in comps])


@dataclass(frozen=True)
class SeriesMeta:
    subject_id: str
    n_samples: int
    sample_period_s: float = BASE_PERIOD_S
    duration_s: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "duration_s", self.n_samples * self.sample_period_s)


def validate_series(s: SubjectSeries) -> SeriesMeta:
    missing = [c.value for c in ALL_CHANNELS if c not in s.channels]
    if missing:
        raise MissingColumn(f"{s.subject_id}: missing channels {missing}")
    if not (s.sample_period_s > 0 and math.isfinite(s.sample_period_s)):
        raise ValidationError(f"{s.subject_id}: sample_period_s must be positive")
    lengths = {c: len(s.channels[c]) for c in ALL_CHANNELS}
    if len(set(lengths.values())) != 1:
        raise ChannelLengthMismatch(f"{s.subject_id}: channel lengths differ: "
                                    + ", ".join(f"{c.value}={n}" for c, n in lengths.items()))
    n = lengths[WorkloadComponent.OVERALL]
    if n < 1:
        raise EmptySeries(f"{s.subject_id}: no samples")
    for c in ALL_CHANNELS:
        bad = ~np.isfinite(s.channels[c])
        if bad.any():
            i = int(np.argmax(bad))
            raise NonFiniteValue(f"{s.subject_id}: non-finite {c.value} value at sample {i}")
    return SeriesMeta(s.subject_id, n, s.sample_period_s)


def parse_series_csv(text: str | TextIO, subject_id: str = "subject") -> SubjectSeries:
    """Parse a series CSV into a validated :class:`SubjectSeries`."""
    stream = io.StringIO(text) if isinstance(text, str) else text
    reader = csv.reader(stream)
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise EmptySeries("empty CSV input") from None
    missing = [h for h in CSV_HEADER if h not in header]
    if missing:
        raise MissingColumn(f"header lacks columns {missing}")
    cols = [header.index(h) for h in CSV_HEADER]

    rows = []
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        try:
            rows.append([float(row[j]) for j in cols])
        except (ValueError, IndexError):
            raise NonFiniteValue(f"line {lineno}: unreadable or missing value") from None
    if not rows:
        raise EmptySeries("CSV has a header but no data rows")

    data = np.asarray(rows, dtype=np.float64)
    if not np.isfinite(data).all():
        r, c = np.argwhere(~np.isfinite(data))[0]
        raise NonFiniteValue(f"line {r + 2}: non-finite {CSV_HEADER[c]} value")

    t = data[:, 0]
    period = BASE_PERIOD_S
    if len(t) > 1:
        deltas = np.diff(t)
        period = float(deltas[0])
        if period <= 0:
            raise NonUniformGrid("time_s must be strictly increasing")
        if np.abs(deltas - period).max() > GRID_TOL_S:
            k = int(np.argmax(np.abs(deltas - period) > GRID_TOL_S))
            raise NonUniformGrid(f"time step {deltas[k]!r} at row {k + 1} differs from {period!r}")

    channels = {c: data[:, j + 1] for j, c in enumerate(ALL_CHANNELS)}
    series = SubjectSeries(subject_id, channels, sample_period_s=period, start_time_s=float(t[0]))
    validate_series(series)
    return series


def serialize_series_csv(s: SubjectSeries) -> str:
    validate_series(s)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    mat = s.matrix(ALL_CHANNELS)
    for i, t in enumerate(s.times()):
        writer.writerow([repr(float(t))] + [repr(float(v)) for v in mat[:, i]])
    return buf.getvalue()


def rebin(s: SubjectSeries, period_s: float = BASE_PERIOD_S) -> SubjectSeries:
    """Mean-bin a finer uniform series onto a coarser grid.

    ``period_s`` must be an integer multiple of the series' period; a trailing
    partial bin is dropped.
    """
    ratio = period_s / s.sample_period_s
    factor = round(ratio)
    if factor < 1 or abs(ratio - factor) > 1e-9:
        raise NonUniformGrid(f"cannot bin period {s.sample_period_s} s into {period_s} s")
    if factor == 1:
        return s
    n_bins = s.n_samples // factor
    if n_bins < 1:
        raise EmptySeries(f"{s.subject_id}: shorter than one {period_s} s bin")
    channels = {c: v[: n_bins * factor].reshape(n_bins, factor).mean(axis=1)
                for c, v in s.channels.items()}
    return SubjectSeries(s.subject_id, channels, sample_period_s=period_s, start_time_s=s.start_time_s)


def read_cohort(data_dir: str | os.PathLike, period_s: float = BASE_PERIOD_S) -> list[SubjectSeries]:
    """Load every ``*.csv`` in ``data_dir``, rebinned to ``period_s``, sorted by subject id."""
    root = Path(data_dir)
    if not root.is_dir():
        raise IoFailure(f"cohort directory {root} does not exist")
    out = []
    for path in sorted(root.glob("*.csv")):
        with path.open(encoding="utf-8", newline="") as fh:
            out.append(rebin(parse_series_csv(fh, subject_id=path.stem), period_s))
    return sorted(out, key=lambda s: s.subject_id)


def write_cohort(series: Iterable[SubjectSeries], data_dir: str | os.PathLike) -> list[Path]:
    root = Path(data_dir)
    paths = []
    try:
        root.mkdir(parents=True, exist_ok=True)
        for s in series:
            path = root / f"{s.subject_id}.csv"
            path.write_text(serialize_series_csv(s), encoding="utf-8")
            paths.append(path)
    except OSError as exc:
        raise IoFailure(f"cannot write cohort to {root}: {exc}") from exc
    return paths
