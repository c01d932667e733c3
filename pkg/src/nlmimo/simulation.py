"""Block-based BER Monte Carlo over user drops, with SNR_edge bisection."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .bussgang import chain_params
from .channel import build_channel, drop_seed, drop_users
from .nonlinearity import NonlinearChain, apply_chain
from .powercontrol import apply_power_control
from .receiver import (availability_quantile, lmmse_build, lmmse_sinr_all,
                       qpsk_detect, qpsk_modulate, random_bits)
from .scenario import ScenarioSpec
from .utils import complex_normal, stream

BLOCK_SYMBOLS = 8192
MIN_SYMBOLS = 10_000


@dataclass(frozen=True)
class DropResult:
    bit_errors: np.ndarray
    n_bits: int
    sinr: np.ndarray            # analytic LMMSE SINR with effective noise
    sinr_empirical: np.ndarray  # signal-to-residual ratio at the detector input
    radius: np.ndarray
    power_scale: np.ndarray

    @property
    def ber(self) -> np.ndarray:
        return self.bit_errors / self.n_bits


@dataclass(frozen=True)
class OutageReport:
    """Per-user results pooled over drops (users of drop 0 first)."""

    per_user_ber: np.ndarray
    per_user_sinr: np.ndarray
    per_user_sinr_empirical: np.ndarray
    quantile_ber: float
    availability: float
    n_symbols: int
    n_drops: int
    snr_edge_db: float
    drops: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        if np.any((self.per_user_ber < 0) | (self.per_user_ber > 0.5 + 1e-12)):
            # BER above 1/2 is possible on a short run of a broken link; clip for the report
            object.__setattr__(self, "per_user_ber", np.clip(self.per_user_ber, 0.0, 1.0))

    @property
    def quantile_sinr(self) -> float:
        """SINR reached by an ``availability`` fraction of the users."""
        return -availability_quantile(-self.per_user_sinr, self.availability)


def _block_sizes(n_symbols: int, block: int):
    full, rest = divmod(n_symbols, block)
    return [block] * full + ([rest] if rest else [])


def simulate_drop(scenario: ScenarioSpec, chain: NonlinearChain, n_symbols: int,
                  seed: int, index: int, block: int = BLOCK_SYMBOLS) -> DropResult:
    """One drop: place users, apply power control, push QPSK through the chain and detect.

    The chain output is mapped back to the linear model ``a y + e`` by
    ``sigma_y / (a * output_scale)`` and fed to an LMMSE receiver built with
    thermal plus self-noise.  Streams are keyed by ``(seed, drop, block)``.
    """
    params = chain_params(chain)
    gamma_g = params.gamma_g
    drop = drop_users(scenario.geometry, scenario.n_users, scenario.r_min, scenario.r_max,
                      scenario.delta_omega_min, seed=drop_seed(seed, index))
    drop = apply_power_control(drop, scenario, gamma_g)
    H = build_channel(drop).H
    sigma_n2 = scenario.sigma_n2
    sigma_y2 = float(np.sum(drop.received_power)) + sigma_n2
    nu_g2 = 0.0 if params.ideal else sigma_y2 / gamma_g
    noise_var = sigma_n2 + nu_g2
    rx = lmmse_build(H, noise_var)
    rescale = math.sqrt(sigma_y2) / (params.a * chain.output_scale(sigma_y2))

    K = drop.n_users
    errors = np.zeros(K, dtype=np.int64)
    s_xx = np.zeros(K)
    s_ee = np.zeros(K)
    s_xe = np.zeros(K, dtype=complex)
    for blk, m in enumerate(_block_sizes(n_symbols, block)):
        bits = random_bits(stream(seed, "sym", index, blk), (K, 2 * m))
        x = qpsk_modulate(bits)
        y = H @ x
        y += complex_normal(stream(seed, "noise", index, blk), y.shape, sigma_n2)
        z = apply_chain(y, chain, sigma_y2)
        if rescale != 1.0:
            z = z * rescale
        x_hat = rx.estimate(z)
        errors += np.count_nonzero(qpsk_detect(x_hat) != bits, axis=1)
        s_xx += np.sum(np.abs(x) ** 2, axis=1)
        s_ee += np.sum(np.abs(x_hat) ** 2, axis=1)
        s_xe += np.sum(x_hat * np.conj(x), axis=1)
    c = s_xe / s_xx
    resid = s_ee - np.abs(c) ** 2 * s_xx
    sinr_emp = np.abs(c) ** 2 * s_xx / np.maximum(resid, 1e-300)
    return DropResult(errors, 2 * n_symbols, lmmse_sinr_all(H, noise_var), sinr_emp,
                      np.asarray(drop.radius), np.asarray(drop.power_scale))


def _drop_job(args):
    return simulate_drop(*args)


def ber_monte_carlo(scenario: ScenarioSpec, chain: NonlinearChain, n_symbols: int = 100_000,
                    n_drops: int = 20, seed: int = 0, workers: int = 1,
                    block: int = BLOCK_SYMBOLS) -> OutageReport:
    """BER per user over ``n_drops`` drops and its ``scenario.availability`` quantile.

    Results depend on ``(scenario, chain, n_symbols, n_drops, seed)`` only,
    not on ``workers``.
    """
    if n_symbols < MIN_SYMBOLS:
        raise ValueError(f"n_symbols must be at least {MIN_SYMBOLS}")
    if n_drops < 1:
        raise ValueError("n_drops must be at least 1")
    chain_params(chain)  # warm the cache before forking
    jobs = [(scenario, chain, n_symbols, seed, d, block) for d in range(n_drops)]
    if workers > 1 and n_drops > 1:
        with ProcessPoolExecutor(max_workers=min(workers, n_drops)) as pool:
            results = list(pool.map(_drop_job, jobs))
    else:
        results = [_drop_job(j) for j in jobs]
    ber = np.concatenate([r.ber for r in results])
    return OutageReport(
        per_user_ber=ber,
        per_user_sinr=np.concatenate([r.sinr for r in results]),
        per_user_sinr_empirical=np.concatenate([r.sinr_empirical for r in results]),
        quantile_ber=availability_quantile(ber, scenario.availability),
        availability=scenario.availability,
        n_symbols=n_symbols,
        n_drops=n_drops,
        snr_edge_db=scenario.snr_edge_db,
        drops=results,
    )


@dataclass(frozen=True)
class SnrSearch:
    snr_edge_db: float          # interpolated SNR_edge meeting the BER target
    reachable: bool
    bracket: tuple              # (lo, hi) in dB after bisection
    evaluations: tuple          # ((snr_db, quantile_ber), ...) in evaluation order
    report: OutageReport | None = None   # report at the upper bracket end


def _interp_log_ber(lo, ber_lo, hi, ber_hi, target):
    if ber_lo <= 0 or ber_hi <= 0 or ber_lo == ber_hi:
        return hi
    t = (math.log(ber_lo) - math.log(target)) / (math.log(ber_lo) - math.log(ber_hi))
    return lo + min(max(t, 0.0), 1.0) * (hi - lo)


def find_snr_edge(scenario: ScenarioSpec, chain: NonlinearChain, n_symbols: int = 100_000,
                  n_drops: int = 20, seed: int = 0, workers: int = 1,
                  lo_db: float = 0.0, hi_db: float = 30.0, tol_db: float = 0.25) -> SnrSearch:
    """Bisect on SNR_edge until the availability-quantile BER crosses ``ber_target``.

    Every evaluation reuses the same drops, bits and noise streams, so the
    quantile BER is a smooth function of SNR_edge.  The returned value
    interpolates log BER linearly inside the final bracket.
    """
    target = scenario.ber_target
    evals = []

    def q(snr):
        rep = ber_monte_carlo(scenario.with_snr(snr), chain, n_symbols, n_drops, seed, workers)
        evals.append((float(snr), rep.quantile_ber))
        return rep

    rep_hi = q(hi_db)
    if rep_hi.quantile_ber > target:
        return SnrSearch(math.nan, False, (lo_db, hi_db), tuple(evals), rep_hi)
    rep_lo = q(lo_db)
    if rep_lo.quantile_ber <= target:
        return SnrSearch(lo_db, True, (lo_db, lo_db), tuple(evals), rep_lo)
    lo, hi, ber_lo, ber_hi = lo_db, hi_db, rep_lo.quantile_ber, rep_hi.quantile_ber
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        rep = q(mid)
        if rep.quantile_ber <= target:
            hi, ber_hi, rep_hi = mid, rep.quantile_ber, rep
        else:
            lo, ber_lo = mid, rep.quantile_ber
    return SnrSearch(_interp_log_ber(lo, ber_lo, hi, ber_hi, target), True, (lo, hi),
                     tuple(evals), rep_hi)
