import json
import math

import numpy as np
import pytest
import scipy.constants as sc

from kickrotor.ensemble import (
    EnsembleResult,
    absorbed_energy_curve,
    initial_ensemble,
    relative_variation,
    row_norm_error,
    run_ensemble,
    saturation_kick,
)
from kickrotor.errors import ConfigError, LeakageError
from kickrotor.propagation import PropagatorCache, RotState, evolve_train
from kickrotor.pulses import Pulse, PulseTrain, TrainSet, jittered_set, periodic_set, periodic_train
from kickrotor.rotor import OXYGEN, RotorSpec, ps_to_trev

FWHM = ps_to_trev(0.130)


def _oracle_member_count(T, cutoff):
    beta = sc.h * sc.c * 100 * OXYGEN.rot_constant / (sc.k * T)
    w = sorted(
        (math.exp(-beta * J * (J + 1)) for J in range(1, 42, 2) for _ in range(2 * J + 1)),
        reverse=True,
    )
    z = math.fsum(w)
    run = 0.0
    for n, x in enumerate(w, start=1):
        run += x / z
        if run >= cutoff:
            return n


def test_initial_ensemble():
    cold = initial_ensemble(OXYGEN, 0.01)
    assert len(cold) == 3
    assert all(st.block.j_list[0] == 1 and w == pytest.approx(1 / 3) for st, w in cold)
    warm = initial_ensemble(OXYGEN, 25.0, 0.999)
    assert math.fsum(w for _, w in warm) == pytest.approx(1.0, abs=1e-12)
    assert len(warm) == _oracle_member_count(25.0, 0.999)


def _small_set(P=4.0, count=3):
    return periodic_set(13, (0.26, 0.29), count, P, FWHM)


def test_zero_kick_keeps_initial_distribution():
    ens = [(RotState.basis(OXYGEN, 3, 1), 1.0)]
    ts = TrainSet([PulseTrain([Pulse(0.0, 0.0, 0.0), Pulse(0.3, 0.0, 0.0)])], "periodic-interval")
    res = run_ensemble(ens, ts, "delta", OXYGEN)
    expected = np.zeros(OXYGEN.j_max + 1)
    expected[3] = 1.0
    for row in res.p_of_J_after_kick:
        np.testing.assert_array_equal(row, expected)
    e = absorbed_energy_curve(res, OXYGEN).hcB
    assert np.all(e == 12.0)


def test_energy_of_ground_level():
    res = EnsembleResult(np.array([[0.0, 1.0] + [0.0] * 40]))
    curve = absorbed_energy_curve(res, OXYGEN)
    assert curve.hcB[0] == 2.0
    assert curve.cm[0] == pytest.approx(2 * OXYGEN.rot_constant)


def test_plus_minus_m_symmetry():
    train = periodic_train(13, 0.275, 6.0, FWHM)
    a = evolve_train(RotState.basis(OXYGEN, 5, 2), train, "finite")
    b = evolve_train(RotState.basis(OXYGEN, 5, -2), train, "finite")
    for pa, pb in zip(a.populations_after_kick, b.populations_after_kick):
        np.testing.assert_allclose(pa, pb, atol=1e-12)
    ens = initial_ensemble(OXYGEN, 10.0)
    ts = _small_set(6.0, 2)
    fast = run_ensemble(ens, ts, "finite", OXYGEN, use_m_symmetry=True)
    full = run_ensemble(ens, ts, "finite", OXYGEN, use_m_symmetry=False)
    np.testing.assert_allclose(fast.p_of_J_after_kick, full.p_of_J_after_kick, atol=1e-12)
    assert fast.metadata["n_members"] < full.metadata["n_members"]


@pytest.fixture(scope="module")
def set1_result():
    ens = initial_ensemble(OXYGEN, 25.0)
    return run_ensemble(ens, _small_set(4.0, 10), "finite", OXYGEN, keep_per_train=True)


def test_row_normalisation_and_parity(set1_result):
    assert row_norm_error(set1_result) < 1e-8
    assert np.all(set1_result.p_of_J_after_kick[:, 0::2] == 0.0)


def test_half_sets_combine_to_full_set():
    ens = initial_ensemble(OXYGEN, 25.0)
    ts = _small_set(4.0, 10)
    full = run_ensemble(ens, ts, "finite", OXYGEN)
    a = run_ensemble(ens, TrainSet(ts.trains[:4], ts.design), "finite", OXYGEN)
    b = run_ensemble(ens, TrainSet(ts.trains[4:], ts.design), "finite", OXYGEN)
    comb = EnsembleResult.combine([a, b])
    np.testing.assert_allclose(comb.p_of_J_after_kick, full.p_of_J_after_kick, atol=1e-12)


def test_parallel_run_is_bit_identical():
    ens = initial_ensemble(OXYGEN, 25.0)
    ts = jittered_set(3, 13, 0.32, 0.43, 0, None, 4.0, FWHM)
    cache = PropagatorCache()
    serial = run_ensemble(ens, ts, "finite", OXYGEN, cache=cache)
    parallel = run_ensemble(ens, ts, "finite", OXYGEN, workers=4, cache=cache)
    assert serial.to_csv() == parallel.to_csv()


def test_leakage_error_names_member():
    spec = RotorSpec(j_max=11)
    ens = initial_ensemble(spec, 2.0)
    with pytest.raises(LeakageError) as exc:
        run_ensemble(ens, _small_set(8.0, 2), "delta", spec)
    assert exc.value.member is not None and "train=" in str(exc.value)


def test_resonant_kicks_grow_ballistically():
    spec = RotorSpec(j_max=121)
    ens = [(RotState.basis(spec, 1, 0), 1.0)]
    train = PulseTrain([Pulse(float(n), 4.0, 0.0) for n in range(13)])
    res = run_ensemble(ens, TrainSet([train], "periodic-interval"), "delta", spec)
    e = absorbed_energy_curve(res, spec).hcB
    assert np.all(np.diff(e) > 0)
    assert np.all(np.diff(e, 2)[1:] > 0)
    assert e[-1] / e[3] > (12 / 3) ** 1.5


@pytest.mark.parametrize("mode,j_max", [("finite", 41), ("delta", 61)])
def test_localization_signature(mode, j_max):
    spec = RotorSpec(j_max=j_max)
    ens = initial_ensemble(spec, 25.0)
    per = run_ensemble(ens, _small_set(4.0, 10), mode, spec)
    assert relative_variation(absorbed_energy_curve(per, spec).hcB, 5, 13) < 0.25


def test_jittered_energy_keeps_growing():
    ens = initial_ensemble(OXYGEN, 25.0)
    jit = run_ensemble(ens, jittered_set(10, 13, 0.32, 0.43, 0, None, 4.0, FWHM), "finite", OXYGEN)
    e = absorbed_energy_curve(jit, OXYGEN).hcB
    assert e[13] / e[3] > 2


def test_energy_helpers():
    e = np.array([2.0, 10.0, 12.0, 11.0, 12.0])
    assert saturation_kick(e) == 2
    assert relative_variation(e, 2, 4) == pytest.approx(1 / 11)


def test_exports_round_trip(set1_result):
    back = EnsembleResult.from_csv(set1_result.to_csv())
    np.testing.assert_array_equal(back.p_of_J_after_kick, set1_result.p_of_J_after_kick)
    doc = json.loads(set1_result.to_json())
    assert doc["metadata"]["train_set"]["design"] == "periodic-interval"
    assert len(doc["metadata"]["train_set"]["trains"]) == 10
    assert len(doc["per_train"]) == 10
    with pytest.raises(ConfigError):
        EnsembleResult.from_csv("a,b\n1,2\n")
