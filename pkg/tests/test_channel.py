import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlmimo.channel import (FIELD_OF_VIEW, ArrayGeometry, UserDrop, build_channel,
                            drop_seed, drop_users, gaussianity_kl, mean_amplitude2,
                            received_samples, spatial_crosscorr, steering_matrix)
from nlmimo.utils import stream

GEOM = ArrayGeometry(64)


def test_geometry_defaults():
    assert GEOM.default_separation == pytest.approx(2.783 / 64)
    assert GEOM.spatial_frequency(math.pi / 6) == pytest.approx(math.pi / 2)
    assert GEOM.friis_amplitude(10.0) == pytest.approx(GEOM.wavelength / (40 * math.pi))
    with pytest.raises(ValueError):
        ArrayGeometry(0)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**32))
def test_drop_respects_region_and_separation(k, seed):
    d = drop_users(GEOM, k, seed=seed)
    assert np.all((d.radius >= 5) & (d.radius <= 100))
    assert np.all(np.abs(d.theta) <= FIELD_OF_VIEW)
    w = np.sort(d.omega)
    assert np.all(np.diff(w) >= GEOM.default_separation)
    assert np.all(d.power_scale == 1.0)


def test_drop_is_seeded():
    a = drop_users(GEOM, 8, seed=4)
    b = drop_users(GEOM, 8, seed=4)
    assert np.array_equal(a.radius, b.radius) and np.array_equal(a.phase, b.phase)
    assert drop_seed(1, 0) != drop_seed(1, 1)


def test_drop_rejects_impossible_packing():
    span = 2 * GEOM.spatial_frequency(FIELD_OF_VIEW)
    with pytest.raises(ValueError):
        drop_users(GEOM, 10, delta_omega_min=span / 10)
    with pytest.raises(ValueError):
        drop_users(GEOM, 2, r_min=10, r_max=5)


def test_radius_is_uniform_in_area():
    r = np.concatenate([drop_users(GEOM, 16, seed=s, delta_omega_min=0).radius for s in range(500)])
    # P(R <= r) = (r^2 - 25) / (100^2 - 25)
    frac = np.mean(r <= 50.0)
    assert frac == pytest.approx((2500 - 25) / (10000 - 25), abs=0.02)


def test_mean_amplitude2_matches_sampling():
    r2 = stream(0, "r").uniform(25, 10000, 1_000_000)
    mc = np.mean((GEOM.wavelength / (4 * math.pi)) ** 2 / r2)
    assert mean_amplitude2(5, 100, GEOM.wavelength) == pytest.approx(mc, rel=0.01)


def test_channel_columns():
    d = drop_users(GEOM, 3, seed=1)
    H = build_channel(d).H
    assert H.shape == (64, 3)
    assert np.allclose(np.abs(H), d.amplitude[None, :])
    ratio = H[1:] / H[:-1]
    assert np.allclose(np.angle(ratio), np.angle(np.exp(1j * d.omega))[None, :])
    assert np.allclose(H[0], d.amplitude * np.exp(1j * d.phase))


def test_power_scale_enters_channel():
    d = drop_users(GEOM, 3, seed=1)
    s = np.array([1.0, 0.25, 0.5])
    H = build_channel(d.with_power_scale(s)).H
    assert np.allclose(np.abs(H[0]), d.amplitude * np.sqrt(s))


def test_record_round_trip():
    d = drop_users(GEOM, 5, seed=2).with_power_scale([1, 0.5, 0.3, 1, 1])
    e = UserDrop.from_record(d.to_record())
    assert np.array_equal(e.radius, d.radius) and np.array_equal(e.power_scale, d.power_scale)
    assert e.geometry == d.geometry


def test_drop_arrays_are_read_only():
    d = drop_users(GEOM, 2, seed=0)
    with pytest.raises(ValueError):
        d.radius[0] = 1.0


def test_spatial_crosscorr():
    n = 64
    assert spatial_crosscorr(0.0, n) == 1.0
    assert spatial_crosscorr(2 * math.pi / n, n) == pytest.approx(0.0, abs=1e-12)
    w = 0.03
    a = steering_matrix([0.0, w], n)
    assert abs(np.vdot(a[:, 0], a[:, 1])) / n == pytest.approx(spatial_crosscorr(w, n))


def test_received_samples_noise_power():
    H = np.zeros((32, 1), dtype=complex)
    y = received_samples(H, np.zeros((1, 50_000)), 0.3, seed=1)
    assert np.mean(np.abs(y) ** 2) == pytest.approx(0.3, rel=0.02)
    y2 = received_samples(H, np.zeros((1, 50_000)), 0.3, seed=1)
    assert np.array_equal(y, y2)


def test_gaussianity_kl_separates_distributions():
    rng = stream(0, "kl")
    assert gaussianity_kl(rng.standard_normal(200_000)) < 0.002
    assert gaussianity_kl(rng.uniform(-1, 1, 200_000)) > 0.05
    with pytest.raises(ValueError):
        gaussianity_kl(np.zeros(10))
