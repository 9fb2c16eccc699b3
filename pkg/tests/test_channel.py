import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_localize
from uwbsel.channel import (
    SPEED_OF_LIGHT,
    Beacon,
    MeasurementModel,
    TdoaMeasurement,
    localize_pair,
    location_error,
    measure_tdoa,
    sample_channel_gain,
    true_tdoa,
)
from uwbsel.env import make_world
from uwbsel.errors import ValidationError

C = SPEED_OF_LIGHT
coord = st.floats(-20, 20, allow_nan=False)


def test_true_tdoa_examples():
    assert true_tdoa((3, 7), Beacon(0, (0, 0)), Beacon(1, (6, 0))) == 0.0
    assert true_tdoa((0, 0), Beacon(0, (0, 0)), Beacon(1, (3, 4))) == pytest.approx(-5 / C, rel=1e-15)
    # -16.678 ns is the vacuum-light figure; at the rounded c = 3e8 it is -16.667 ns
    assert true_tdoa((0, 0), Beacon(0, (0, 0)), Beacon(1, (3, 4)), c=299_792_458.0) == pytest.approx(-16.678e-9, rel=1e-4)
    assert -5 / C == pytest.approx(-16.667e-9, rel=1e-4)


@given(coord, coord, coord, coord, coord, coord)
def test_tdoa_antisymmetric_and_bounded(ux, uy, ax, ay, bx, by):
    bi, bj = Beacon(0, (ax, ay)), Beacon(1, (bx, by))
    t = true_tdoa((ux, uy), bi, bj)
    assert t == -true_tdoa((ux, uy), bj, bi)
    assert abs(t) <= math.hypot(ax - bx, ay - by) / C * (1 + 1e-12) + 1e-24


def test_gain_rayleigh_mean():
    rng = np.random.default_rng(0)
    g = np.array([sample_channel_gain(1.0, rng) for _ in range(20000)])
    big = np.random.default_rng(1).gamma(1.0, 1.0, 10**6)  # same law, vectorized for the 1e6 check
    assert 0.97 < g.mean() < 1.03
    assert 0.99 < big.mean() < 1.01


def test_gain_variance_m4():
    rng = np.random.default_rng(2)
    g = np.array([sample_channel_gain(4.0, rng) for _ in range(10**5)])
    assert g.var() == pytest.approx(0.25, abs=0.01)


def test_gain_shape_precondition():
    with pytest.raises(ValidationError):
        sample_channel_gain(0.4, np.random.default_rng(0))
    with pytest.raises(ValidationError):
        MeasurementModel(nakagami_m=0.4)


def test_noiseless_measurement_is_exact():
    bi, bj = Beacon(0, (0, 0)), Beacon(1, (6, 5))
    m = MeasurementModel(los_noise_std=0.0, nlos_bias_mean=0.0)
    meas = measure_tdoa((2, 3), bi, bj, (1, 1), m, np.random.default_rng(0))
    assert meas.t_ij == true_tdoa((2, 3), bi, bj)


def _errors(flags, model, n, seed=0):
    bi, bj = Beacon(0, (0, 0)), Beacon(1, (6, 5))
    rng = np.random.default_rng(seed)
    t0 = true_tdoa((2, 3), bi, bj)
    return np.array([measure_tdoa((2, 3), bi, bj, flags, model, rng).t_ij - t0 for _ in range(n)])


def test_los_noise_statistics():
    e = _errors((1, 1), MeasurementModel(los_noise_std=1e-9), 10**5)
    assert abs(e.mean()) < 0.1e-9
    assert 0.95 * math.sqrt(2) * 1e-9 <= e.std() <= 1.05 * math.sqrt(2) * 1e-9


def test_nlos_bias_mean():
    e = _errors((0, 1), MeasurementModel(los_noise_std=1e-9, nlos_bias_mean=10e-9), 10**5)
    assert e.mean() == pytest.approx(10e-9, abs=0.5e-9)


def test_fading_inflates_noise():
    plain = _errors((1, 1), MeasurementModel(los_noise_std=1e-9), 20000)
    faded = _errors((1, 1), MeasurementModel(los_noise_std=1e-9, fading_enabled=True, nakagami_m=1.0), 20000)
    assert faded.std() > plain.std()


def test_measurements_seeded():
    a = _errors((0, 1), MeasurementModel(fading_enabled=True), 50, seed=7)
    b = _errors((0, 1), MeasurementModel(fading_enabled=True), 50, seed=7)
    assert np.array_equal(a, b)


def test_measurement_rejects_same_beacon():
    with pytest.raises(ValidationError):
        TdoaMeasurement((1, 1), 0.0, (1, 1))


def test_localize_noiseless_generic_placement():
    world = make_world(beacon_positions=[(0.3, 0.1), (5.7, 4.6), (5.9, 0.2), (0.1, 4.8)], p_nlos=0.0)
    bi, bj = world.beacons[0], world.beacons[1]
    for center in world.centers:
        t = true_tdoa(center, bi, bj)
        residual = [abs(t - true_tdoa(c, bi, bj)) for c in world.centers]
        if sorted(residual)[1] == 0.0:
            continue  # argmin not unique
        est = localize_pair(TdoaMeasurement((0, 1), t, (1, 1)), bi, bj, world.centers)
        assert location_error(center, est) == 0.0


def test_localize_symmetric_axis_tie_break():
    world = make_world()  # centers x = 1..5, beacons (0,0) and (6,0) symmetric about x = 3
    bi, bj = world.beacons[0], world.beacons[1]
    meas = TdoaMeasurement((0, 1), 0.0, (1, 1))
    est = localize_pair(meas, bi, bj, world.centers)
    assert est[0] == 3.0
    # (3,1) and (3,2) are equally near (2.5,1.5); the lower cell index wins
    assert localize_pair(meas, bi, bj, world.centers, prev_estimate=(2.5, 1.5)) == (3.0, 1.0)
    assert localize_pair(meas, bi, bj, world.centers, prev_estimate=(2.9, 3.9)) == (3.0, 4.0)


def test_localize_single_cell():
    assert localize_pair(TdoaMeasurement((0, 1), 1e-6, (1, 1)), Beacon(0, (0, 0)), Beacon(1, (1, 1)),
                         np.array([[7.0, 8.0]])) == (7.0, 8.0)


def test_localize_empty_grid():
    with pytest.raises(ValidationError):
        localize_pair(TdoaMeasurement((0, 1), 0.0, (1, 1)), Beacon(0, (0, 0)), Beacon(1, (1, 1)),
                      np.zeros((0, 2)))


@settings(max_examples=300, deadline=None)
@given(st.integers(0, 2**31), st.booleans())
def test_localize_matches_brute_force(seed, use_prev):
    rng = np.random.default_rng(seed)
    n_x, n_y = int(rng.integers(1, 7)), int(rng.integers(1, 6))
    cells = [(ix + 0.5, iy + 0.5) for iy in range(n_y) for ix in range(n_x)]
    bi = (float(rng.choice([0, n_x])), float(rng.integers(0, n_y + 1)))
    bj = (float(rng.uniform(0, n_x)), float(rng.uniform(0, n_y)))
    if bi == bj:
        return
    # half the time a quantized measurement so exact ties occur
    t = float(rng.normal(0, 5e-9)) if rng.random() < 0.5 else 0.0
    prev = (float(rng.uniform(0, n_x)), float(rng.uniform(0, n_y))) if use_prev else None
    got = localize_pair(TdoaMeasurement((0, 1), t, (1, 1)), Beacon(0, bi), Beacon(1, bj),
                        np.array(cells), prev_estimate=prev)
    assert got == brute_force_localize(t, bi, bj, cells, prev)


def test_location_error_examples():
    assert location_error((1, 2), (1, 2)) == 0.0
    assert location_error((0, 0), (3, 4)) == 5.0
    assert location_error((3, 4), (0, 0)) == location_error((0, 0), (3, 4))
