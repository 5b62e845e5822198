import itertools
from dataclasses import replace

import numpy as np
import pytest

from workload_forecast.data import COMPONENTS, WorkloadComponent, validate_series
from workload_forecast.errors import ValidationError
from workload_forecast.synth import (
    LEVELS,
    SynthParams,
    WorkloadLevel,
    enumerate_orderings,
    is_valid_ordering,
    level_profile,
    synthesize_cohort,
    synthesize_subject,
)


def brute_force_orderings():
    """Filter all 3^7 sequences by: every ordered pair of distinct levels exactly once."""
    pairs = [(a, b) for a in LEVELS for b in LEVELS if a != b]
    out = []
    for seq in itertools.product(LEVELS, repeat=7):
        trans = list(zip(seq[:-1], seq[1:]))
        if all(trans.count(p) == 1 for p in pairs):
            out.append(seq)
    return out


def key(o):
    return [LEVELS.index(l) for l in o]


def test_orderings_match_brute_force():
    brute = sorted(brute_force_orderings(), key=key)
    assert enumerate_orderings() == brute
    assert len(brute) == 18  # 3 start levels x 6 Eulerian trails each


def test_ordering_properties():
    for o in enumerate_orderings():
        assert is_valid_ordering(o)
        assert all(a != b for a, b in zip(o[:-1], o[1:]))
        assert set(o) == set(LEVELS)
    assert not is_valid_ordering([WorkloadLevel.UNDERLOAD] * 7)


def quiet(**kw):
    return SynthParams.default(noise_sd=0.0, transition_ramp_s=0.0, **kw)


def test_noiseless_piecewise_constant():
    p = quiet()
    o = enumerate_orderings()[3]
    s = synthesize_subject(o, p, "q")
    assert s.n_samples == 630 and s.sample_period_s == 5.0
    for comp in COMPONENTS:
        x = s.channel(comp)
        for j, lvl in enumerate(o):
            assert np.all(x[90 * j:90 * (j + 1)] == p.base_levels[lvl][comp])
        changes = np.flatnonzero(np.diff(x)) + 1
        assert set(changes) <= {90, 180, 270, 360, 450, 540}


def test_segment_means_away_from_ramps():
    p = SynthParams.default(noise_sd=0.0, transition_ramp_s=60.0)
    o = enumerate_orderings()[5]
    s = synthesize_subject(o, p, "r")
    for comp in COMPONENTS:
        for j, lvl in enumerate(o):
            seg = s.channel(comp)[90 * j + 12:90 * (j + 1)]
            assert np.all(seg == p.base_levels[lvl][comp])


def test_ramp_is_linear_into_new_level():
    p = SynthParams.default(transition_ramp_s=20.0)
    o = enumerate_orderings()[0]
    prof = level_profile(o, p, WorkloadComponent.COGNITIVE)
    a, b = p.base_levels[o[0]][WorkloadComponent.COGNITIVE], p.base_levels[o[1]][WorkloadComponent.COGNITIVE]
    np.testing.assert_allclose(prof[90:94], a + (b - a) * np.arange(1, 5) / 5)
    assert prof[94] == b and prof[89] == a


def test_overall_is_sum():
    s = synthesize_subject(enumerate_orderings()[1], SynthParams.default(seed=4), "o")
    total = np.zeros(s.n_samples)
    for comp in COMPONENTS:
        total = total + s.channel(comp)
    assert np.array_equal(s.channel(WorkloadComponent.OVERALL), total)


def test_subject_determinism():
    p = SynthParams.default(seed=9)
    o = enumerate_orderings()[2]
    a, b = synthesize_subject(o, p, "x"), synthesize_subject(o, p, "x")
    for c in a.channels:
        assert a.channel(c).tobytes() == b.channel(c).tobytes()
    c2 = synthesize_subject(o, p, "y")
    assert not np.array_equal(a.channel(WorkloadComponent.VISUAL), c2.channel(WorkloadComponent.VISUAL))


def test_ar1_autocorrelation():
    p = SynthParams.default(seed=1, noise_sd=0.5, ar1_coefficient=0.9)
    o = enumerate_orderings()[0]
    s = synthesize_subject(o, p, "ac")
    errs = []
    for comp in COMPONENTS:
        resid = s.channel(comp) - level_profile(o, p, comp)
        r = resid - resid.mean()
        errs.append(abs(float(r[1:] @ r[:-1]) / float(r @ r) - 0.9))
    assert max(errs) < 0.05


def test_cohort_round_robin():
    p = SynthParams.default(seed=11)
    cohort = synthesize_cohort(16, p)
    orderings = enumerate_orderings()
    assert len(cohort) == 16
    assert len({s.subject_id for s in cohort}) == 16
    for i, s in enumerate(cohort):
        assert validate_series(s).duration_s == 3150.0
        expected = orderings[i % len(orderings)]
        noiseless = quiet(seed=11)
        base = level_profile(expected, replace(noiseless, transition_ramp_s=p.transition_ramp_s),
                             WorkloadComponent.COGNITIVE)
        # noise is small relative to level gaps, so the structure is recoverable
        assert np.corrcoef(base, s.channel(WorkloadComponent.COGNITIVE))[0, 1] > 0.8


def test_cohort_seed_isolation():
    a = synthesize_cohort(3, SynthParams.default(seed=1))
    b = synthesize_cohort(3, SynthParams.default(seed=2))
    for x, y in zip(a, b):
        assert not np.array_equal(x.channel(WorkloadComponent.COGNITIVE), y.channel(WorkloadComponent.COGNITIVE))
    qa = synthesize_cohort(3, quiet(seed=1))
    qb = synthesize_cohort(3, quiet(seed=2))
    for x, y in zip(qa, qb):
        assert np.array_equal(x.channel(WorkloadComponent.COGNITIVE), y.channel(WorkloadComponent.COGNITIVE))


def test_default_levels_monotone():
    p = SynthParams.default()
    for comp in COMPONENTS:
        u, n, o = (p.base_levels[l][comp] for l in LEVELS)
        assert u < n < o


def test_params_validation():
    with pytest.raises(ValidationError):
        SynthParams.default(ar1_coefficient=1.0)
    with pytest.raises(ValidationError):
        SynthParams.default(transition_ramp_s=7.0)
    with pytest.raises(ValidationError):
        synthesize_cohort(0, SynthParams.default())
    with pytest.raises(ValidationError):
        synthesize_subject([WorkloadLevel.UNDERLOAD] * 7, SynthParams.default(), "bad")
