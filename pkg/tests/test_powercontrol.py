import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlmimo.channel import ArrayGeometry, UserDrop, build_channel, drop_users
from nlmimo.powercontrol import (PowerControlConfig, analytic_alpha_no_pc, apply_adaptive,
                                 apply_naive, apply_power_control, ensemble_alpha,
                                 ensemble_alpha_no_pc, power_control_factor)
from nlmimo.receiver import lmmse_sinr_all
from nlmimo.scenario import ScenarioSpec
from nlmimo.utils import db2lin, lin2db

GEOM = ArrayGeometry(64)


def _drop(radius, theta, geom=GEOM):
    k = len(radius)
    return UserDrop(radius, theta, np.zeros(k), np.ones(k), geom, 5.0, 100.0)


def test_naive_equalizes_to_edge():
    d = apply_naive(_drop([100.0, 50.0, 10.0], [0.0, 0.3, -0.4]))
    assert d.power_scale == pytest.approx([1.0, 0.25, 0.01])
    assert np.allclose(d.received_power, d.edge_amplitude**2)
    assert power_control_factor(d) == 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 16), st.integers(0, 2**31))
def test_naive_factor_is_exactly_one(k, seed):
    d = apply_naive(drop_users(GEOM, k, seed=seed))
    assert power_control_factor(d) == 1.0
    assert np.all(d.power_scale <= 1.0)


def test_factor_all_users_at_edge():
    assert power_control_factor(_drop([100.0, 100.0], [0.1, -0.2])) == 1.0


def test_analytic_alpha():
    assert lin2db(analytic_alpha_no_pc(5, 100)) == pytest.approx(-7.79, abs=0.005)
    assert analytic_alpha_no_pc(99.999, 100) == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(ValueError):
        analytic_alpha_no_pc(100, 100)


def test_analytic_alpha_matches_sampling():
    a = lin2db(analytic_alpha_no_pc(10, 100))
    assert lin2db(ensemble_alpha_no_pc(10, 100, 1_000_000, seed=1)) == pytest.approx(a, abs=0.05)


def test_adaptive_single_user_hits_threshold():
    sigma_n2 = 1e-12
    d = _drop([20.0], [0.0])
    snr = lin2db(lmmse_sinr_all(build_channel(d).H, sigma_n2)[0])
    th = snr - 10.0
    out, trace = apply_adaptive(d, sigma_n2, PowerControlConfig("adaptive", th))
    assert lin2db(out.power_scale[0]) == pytest.approx(-10.0, abs=1e-9)
    assert lin2db(lmmse_sinr_all(build_channel(out).H, sigma_n2)[0]) == pytest.approx(th, abs=1e-9)
    assert trace.converged and trace.iterations == 2


def test_adaptive_orthogonal_users_one_step():
    n = 64
    theta = np.arcsin(np.array([0, 5, 11, -9]) * 2 * np.pi / n / np.pi)
    d = _drop([10.0, 30.0, 60.0, 90.0], theta)
    sigma_n2 = 64 * d.edge_amplitude**2 / db2lin(10.0)
    th = 15.0
    out, trace = apply_adaptive(d, sigma_n2, PowerControlConfig("adaptive", th))
    sinr = lin2db(lmmse_sinr_all(build_channel(out).H, sigma_n2))
    before = trace.sinr_db[0]
    assert np.allclose(sinr[before > th], th, atol=1e-9)
    assert np.allclose(out.power_scale[before <= th], 1.0)
    assert trace.converged and trace.iterations == 2


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 24))
def test_adaptive_monotone_and_respects_target(seed, k):
    sc = ScenarioSpec(n_antennas=64, n_users=k, power_control="adaptive", snr_edge_db=15.0)
    d = drop_users(sc.geometry, k, seed=seed)
    cfg = PowerControlConfig.from_scenario(sc)
    out, trace = apply_adaptive(d, sc.sigma_n2, cfg, gamma_g=db2lin(15.0))
    p = np.vstack([np.zeros(k)] + trace.power_db)
    assert np.all(np.diff(p, axis=0) <= 0)
    assert np.all(out.power_scale <= 1.0)
    if trace.converged:
        final = trace.sinr_db[-1]
        untouched = out.power_scale == 1.0
        assert np.all((final <= cfg.sinr_th_db + cfg.convergence_tol_db) | untouched)


def test_config_validation():
    with pytest.raises(ValueError):
        PowerControlConfig("adaptive", None)
    with pytest.raises(ValueError):
        PowerControlConfig("none", n_iter=0)
    with pytest.raises(ValueError):
        PowerControlConfig("bogus")


def test_dispatcher():
    d = drop_users(GEOM, 4, seed=0)
    sc = ScenarioSpec(n_antennas=64, n_users=4)
    assert np.all(apply_power_control(d, sc).power_scale == 1.0)
    naive = apply_power_control(d, ScenarioSpec(n_antennas=64, n_users=4, power_control="naive"))
    assert power_control_factor(naive) == 1.0


def test_adaptive_factor_is_a_few_db_below_edge():
    sc = ScenarioSpec(n_users=128, power_control="adaptive", snr_edge_db=16.0)
    a = lin2db(ensemble_alpha(sc, 20, seed=0, gamma_g=db2lin(17.5)))
    assert -3.0 < a < -1.0
    assert math.isfinite(a)
