import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlmimo.channel import ArrayGeometry, build_channel, drop_users, steering_matrix
from nlmimo.receiver import (availability_quantile, efficiency, empirical_sinr, lmmse_build,
                             lmmse_sinr, lmmse_sinr_all, qpsk_detect, qpsk_modulate,
                             random_bits)
from nlmimo.utils import complex_normal, stream


def _random_h(seed, n=32, k=6):
    rng = stream(seed, "H")
    return complex_normal(rng, (n, k))


def test_solve_residual():
    H = _random_h(0)
    rx = lmmse_build(H, 0.1)
    lhs = (H.conj().T @ H + 0.1 * np.eye(6)) @ rx.W
    assert np.linalg.norm(lhs - H.conj().T) / np.linalg.norm(H) < 1e-10


def test_rejects_nonpositive_noise():
    with pytest.raises(ValueError):
        lmmse_build(_random_h(0), 0.0)
    with pytest.raises(ValueError):
        lmmse_sinr_all(_random_h(0), -1.0)


def test_single_user_wiener_gain():
    h = _random_h(1, k=1)
    nv = 0.5
    rx = lmmse_build(h, nv)
    hh = float(np.vdot(h, h).real)
    assert (rx.W @ h).item() == pytest.approx(hh / (hh + nv))
    assert lmmse_sinr(h, nv, 0) == pytest.approx(hh / nv)
    assert efficiency(h, nv, 0) == pytest.approx(1.0, rel=1e-12)


def test_orthogonal_users_decouple():
    n = 16
    H = steering_matrix(2 * np.pi * np.array([0, 3, 7]) / n, n) * np.array([1.0, 0.5, 2.0])
    rx = lmmse_build(H, 0.2)
    cross = rx.W @ H
    assert np.allclose(cross - np.diag(np.diag(cross)), 0, atol=1e-12)
    single = np.sum(np.abs(H) ** 2, axis=0) / 0.2
    assert np.allclose(lmmse_sinr_all(H, 0.2), single)
    assert np.allclose(efficiency(H, 0.2), 1.0)


def test_large_noise_limit_is_matched_filter():
    H = _random_h(2)
    nv = 1e8
    assert np.allclose(lmmse_build(H, nv).W * nv, H.conj().T, rtol=1e-5, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 1e3))
def test_sinr_forms_agree_and_efficiency_bounded(seed, nv):
    H = _random_h(seed)
    all_k = lmmse_sinr_all(H, nv)
    for k in range(H.shape[1]):
        assert lmmse_sinr(H, nv, k) == pytest.approx(all_k[k], rel=1e-8)
    assert np.all(efficiency(H, nv) <= 1 + 1e-12)


def test_sinr_matches_output_statistics():
    geom = ArrayGeometry(32)
    H = build_channel(drop_users(geom, 4, seed=3)).H
    nv = float(np.mean(np.sum(np.abs(H) ** 2, axis=0))) / 32 / 3.0
    rng = stream(4, "sym")
    x = qpsk_modulate(random_bits(rng, (4, 2_000_000)))
    y = H @ x + complex_normal(stream(4, "n"), (32, x.shape[1]), nv)
    emp = empirical_sinr(x, lmmse_build(H, nv).estimate(y))
    assert np.allclose(emp, lmmse_sinr_all(H, nv), rtol=0.02)


def test_qpsk_mapping_and_loopback():
    assert qpsk_modulate([0, 0])[0] == pytest.approx((1 + 1j) / math.sqrt(2))
    assert qpsk_modulate([1, 0])[0] == pytest.approx((-1 + 1j) / math.sqrt(2))
    bits = random_bits(stream(0, "b"), (3, 1000))
    assert np.array_equal(qpsk_detect(qpsk_modulate(bits)), bits)
    assert np.allclose(np.abs(qpsk_modulate(bits)), 1.0)
    with pytest.raises(ValueError):
        qpsk_modulate([0, 1, 1])


def test_availability_quantile():
    v = np.arange(1, 101, dtype=float)
    assert availability_quantile(v, 0.95) == 95.0
    assert availability_quantile(v[::-1], 0.95) == 95.0
    assert availability_quantile([3.0], 0.95) == 3.0
    with pytest.raises(ValueError):
        availability_quantile([], 0.9)


@settings(max_examples=30)
@given(st.lists(st.floats(0, 0.5), min_size=1, max_size=200), st.floats(0.5, 0.99))
def test_availability_quantile_covers_fraction(values, avail):
    q = availability_quantile(values, avail)
    assert np.mean(np.asarray(values) <= q) >= avail - 1e-12
