import json
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kickrotor.errors import ConfigError, GenerationError
from kickrotor.lattice import nearest_resonance_distance
from kickrotor.pulses import (
    Pulse,
    PulseTrain,
    TrainSet,
    amplitude_noise,
    jittered_set,
    jittered_train,
    min_resonance_distance,
    noisy_set,
    periodic_set,
    periodic_train,
    set_statistics_ok,
)
from kickrotor.rotor import ps_to_trev

FWHM = ps_to_trev(0.130)
AVOID = ([1, 3, 5], ps_to_trev(0.150))


def test_periodic_train_examples():
    assert periodic_train(1, 0.3, 4.0).times.tolist() == [0.0]
    tr = periodic_train(13, 0.275, 4.0, FWHM)
    assert tr.times[-1] == pytest.approx(3.30, abs=1e-12)
    tr = periodic_train(13, 0.32, 4.0, FWHM)
    assert tr.times[-1] * 11.67 == pytest.approx(44.8, abs=0.05)
    assert np.all(tr.strengths == 4.0)


def test_periodic_train_window_warning():
    with pytest.warns(UserWarning, match="shaper window"):
        periodic_train(13, 0.4, 4.0, FWHM)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        periodic_train(13, 0.32, 4.0, FWHM)


def test_periodic_set_spacing():
    ts = periodic_set(13, (0.26, 0.29), 10, 4.0, FWHM)
    periods = [t.intervals[0] for t in ts]
    np.testing.assert_allclose(np.diff(periods), 0.03 / 9, atol=1e-12)
    assert periods[0] == pytest.approx(0.26) and periods[-1] == pytest.approx(0.29)
    ts2 = periodic_set(13, (0.315, 0.325), 10, 4.0, FWHM)
    assert ts2.trains[1].intervals[0] - ts2.trains[0].intervals[0] == pytest.approx(0.01 / 9)
    ends = periodic_set(5, (0.2, 0.3), 2, 1.0)
    assert [t.intervals[0] for t in ends] == pytest.approx([0.2, 0.3])
    with pytest.raises(ConfigError):
        periodic_set(13, (0.2, 0.3), 1, 1.0)


def test_train_invariants_rejected():
    with pytest.raises(ConfigError):
        PulseTrain([Pulse(0.0, 1.0, 0.01), Pulse(0.02, 1.0, 0.01)])
    with pytest.raises(ConfigError):
        PulseTrain([Pulse(0.5, 1.0, 0.0), Pulse(0.2, 1.0, 0.0)])
    with pytest.raises(ConfigError):
        Pulse(0.0, -1.0, 0.0)
    with pytest.raises(ConfigError):
        TrainSet([periodic_train(3, 0.3, 1.0), periodic_train(4, 0.3, 1.0)], "jitter", {})


def test_zero_jitter_equals_periodic():
    a = jittered_train(13, 0.3, 0.0, seed=7, P=4.0, fwhm=FWHM)
    b = periodic_train(13, 0.3, 4.0, FWHM)
    np.testing.assert_allclose(a.times, b.times, atol=1e-15)


def test_jitter_is_deterministic():
    a = jittered_train(13, 0.34, 0.35, seed=11, avoid=AVOID, P=4.0, fwhm=FWHM)
    b = jittered_train(13, 0.34, 0.35, seed=11, avoid=AVOID, P=4.0, fwhm=FWHM)
    assert a.to_json() == b.to_json()
    c = jittered_train(13, 0.34, 0.35, seed=12, avoid=AVOID, P=4.0, fwhm=FWHM)
    assert a.to_json() != c.to_json()


def test_jitter_reference_values():
    # Pins the PCG64 stream: interval_k = mean + sigma * standard_normal()
    rng = np.random.Generator(np.random.PCG64(3))
    expected = 0.32 + 0.32 * 0.43 * rng.standard_normal(4)
    expected = expected[expected >= 3 * FWHM][:2]
    tr = jittered_train(3, 0.32, 0.43, seed=3, fwhm=FWHM)
    np.testing.assert_allclose(tr.intervals, expected, rtol=1e-14)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_avoiding_trains_respect_exclusion(seed):
    tr = jittered_train(13, 0.34, 0.35, seed, avoid=AVOID, P=4.0, fwhm=FWHM)
    for x in tr.intervals:
        assert nearest_resonance_distance(float(x), AVOID[0])[0] >= AVOID[1]
        assert x >= 3 * FWHM


def test_rejection_exhaustion():
    with pytest.raises(GenerationError, match="resonances"):
        jittered_train(3, 1 / 3, 0.0, seed=0, avoid=([3], 0.01))


def test_jittered_set_shape_and_statistics():
    ts = jittered_set(10, 13, 0.34, 0.35, 0, AVOID, 4.0, FWHM)
    assert len(ts) == 10 and ts.all_intervals().size == 120
    assert set_statistics_ok(ts.all_intervals(), 0.34, 0.35)
    assert min_resonance_distance(ts, [1, 3, 5]) >= AVOID[1]
    assert ts.design == "jitter-avoiding"
    degenerate = jittered_set(3, 5, 0.3, 0.0, 0)
    assert all(np.allclose(t.intervals, 0.3) for t in degenerate)


def test_set_statistics_over_seed_sweep():
    for seed in range(0, 100, 10):
        ts = jittered_set(10, 13, 0.32, 0.43, seed)
        s = ts.all_intervals().std(ddof=1) / 0.32
        assert 0.43 * 0.85 <= s <= 0.43 * 1.15


def test_amplitude_noise():
    tr = periodic_train(13, 0.3, 4.0, FWHM)
    assert amplitude_noise(tr, 0.0, 1).strengths.tolist() == tr.strengths.tolist()
    a = amplitude_noise(tr, 0.15, 5)
    assert a.strengths.tolist() == amplitude_noise(tr, 0.15, 5).strengths.tolist()
    assert np.all(a.strengths >= 0)
    big = PulseTrain([Pulse(float(t), 1.0, 0.0) for t in range(10_000)])
    ratio = amplitude_noise(big, 0.15, 9).strengths
    assert abs(ratio.mean() - 1.0) < 0.01
    ns = noisy_set(periodic_set(13, (0.26, 0.29), 3, 4.0, FWHM), 0.15, 100)
    assert ns.parameters["amplitude_noise"] == 0.15


def test_json_round_trip():
    ts = jittered_set(3, 13, 0.32, 0.43, 4, None, 6.0, FWHM)
    doc = json.loads(ts.trains[0].to_json())
    assert set(doc) == {"label", "seed", "pulses"}
    assert set(doc["pulses"][0]) == {"t_ps", "t_over_Trev", "P", "fwhm_ps"}
    back = TrainSet.from_dict(ts.to_dict())
    for a, b in zip(ts, back):
        np.testing.assert_allclose(a.times, b.times, rtol=0, atol=1e-15)
        assert a.seed == b.seed
