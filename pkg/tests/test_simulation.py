import math

import numpy as np
import pytest

from nlmimo.nonlinearity import NonlinearChain, ThirdOrderSaturated
from nlmimo.scenario import ScenarioSpec
from nlmimo.simulation import ber_monte_carlo, find_snr_edge
from nlmimo.utils import lin2db, qpsk_ber

SMALL = ScenarioSpec(n_antennas=16, n_users=2, snr_edge_db=8.0)


def test_transparent_chain_is_bit_exact_with_identity():
    transparent = NonlinearChain(passband=ThirdOrderSaturated(math.inf), agc=False)
    assert transparent.is_identity
    a = ber_monte_carlo(SMALL, NonlinearChain.identity(), 20_000, 3, seed=9)
    b = ber_monte_carlo(SMALL, transparent, 20_000, 3, seed=9)
    assert np.array_equal(a.per_user_ber, b.per_user_ber)
    assert np.array_equal(a.per_user_sinr_empirical, b.per_user_sinr_empirical)


def test_workers_do_not_change_results():
    chain = NonlinearChain.from_db(3, 1.4, 4.2)
    a = ber_monte_carlo(SMALL, chain, 12_000, 4, seed=2, workers=1, block=5000)
    b = ber_monte_carlo(SMALL, chain, 12_000, 4, seed=2, workers=3, block=5000)
    assert np.array_equal(a.per_user_ber, b.per_user_ber)
    assert np.array_equal(a.per_user_sinr_empirical, b.per_user_sinr_empirical)


def test_report_fields():
    rep = ber_monte_carlo(SMALL, NonlinearChain.from_db(2), 10_000, 3, seed=1)
    assert rep.per_user_ber.shape == (6,) and rep.n_drops == 3
    assert np.all((rep.per_user_ber >= 0) & (rep.per_user_ber <= 0.5))
    assert rep.quantile_ber == np.sort(rep.per_user_ber)[math.ceil(0.95 * 6) - 1]
    with pytest.raises(ValueError):
        ber_monte_carlo(SMALL, NonlinearChain.identity(), 100, 1)


def test_single_user_at_edge_matches_awgn():
    sc = ScenarioSpec(n_antennas=16, n_users=1, r_min=99.999, r_max=100.0, snr_edge_db=9.7)
    rep = ber_monte_carlo(sc, NonlinearChain.identity(), 250_000, 4, seed=3)
    ber = np.mean(rep.per_user_ber)
    assert ber == pytest.approx(qpsk_ber(10 ** 0.97), rel=0.1)
    assert ber == pytest.approx(1e-3, rel=0.2)


def test_ber_follows_gaussian_residual_map():
    sc = ScenarioSpec(n_antennas=16, n_users=2, snr_edge_db=4.0)
    rep = ber_monte_carlo(sc, NonlinearChain.identity(), 2_000_000, 8, seed=4)
    sinr_db = lin2db(rep.per_user_sinr)
    sel = (sinr_db >= 6) & (sinr_db <= 12)
    assert sel.sum() >= 4
    ratio = rep.per_user_ber[sel] / qpsk_ber(rep.per_user_sinr[sel])
    assert np.all(np.abs(ratio - 1) <= 0.3), ratio


def test_snr_search_edges():
    chain = NonlinearChain.identity()
    res = find_snr_edge(SMALL, chain, 10_000, 2, seed=0, lo_db=0.0, hi_db=2.0)
    assert not res.reachable and math.isnan(res.snr_edge_db)
    res = find_snr_edge(SMALL, chain, 10_000, 2, seed=0, lo_db=25.0, hi_db=30.0)
    assert res.reachable and res.snr_edge_db == 25.0
    res = find_snr_edge(SMALL, chain, 10_000, 2, seed=0, lo_db=0.0, hi_db=20.0, tol_db=0.5)
    lo, hi = res.bracket
    assert hi - lo <= 0.5 and lo <= res.snr_edge_db <= hi
