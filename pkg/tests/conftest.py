import numpy as np
import pytest

from workload_forecast.data import ALL_CHANNELS, SubjectSeries
from workload_forecast.synth import SynthParams, synthesize_cohort


def make_series(n, subject_id="s", seed=0, period=5.0):
    rng = np.random.default_rng(seed)
    channels = {c: rng.normal(3.0, 1.0, n) for c in ALL_CHANNELS}
    return SubjectSeries(subject_id, channels, sample_period_s=period)


def ramp_series(n, subject_id="s", period=5.0):
    """Channel j holds 100*j + sample index, so every value names its origin."""
    channels = {c: 100.0 * j + np.arange(n, dtype=float) for j, c in enumerate(ALL_CHANNELS)}
    return SubjectSeries(subject_id, channels, sample_period_s=period)


@pytest.fixture
def small_cohort():
    return synthesize_cohort(4, SynthParams.default(seed=7))


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    # surface the acceptance verdicts even when output is captured
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
