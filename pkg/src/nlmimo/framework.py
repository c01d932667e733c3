"""Analytical design framework: matched-filter bounds, LMMSE efficiency and spec search."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bussgang import DEFAULT_MC_SEED, chain_params
from .channel import build_channel, drop_seed, drop_users
from .nonlinearity import NonlinearChain
from .powercontrol import analytic_alpha_no_pc, apply_power_control, ensemble_alpha
from .receiver import availability_quantile, lmmse_sinr_all, matched_filter_snr
from .scenario import ScenarioSpec
from .utils import db2lin, lin2db

SEARCH_MC_SAMPLES = 200_000
DEFAULT_BITS = tuple(range(1, 7))
DEFAULT_P1DB_GRID = tuple(np.round(np.arange(-4.0, 10.0 + 1e-9, 0.1), 10).tolist())


# ----------------------------------------------------------------------------
# Matched-filter bounds


def _check_positive(**kw):
    for name, v in kw.items():
        if not np.all(np.asarray(v) > 0):
            raise ValueError(f"{name} must be positive")


def mfb_selfnoise(gamma_g, beta, a_k2, a_rms2):
    """Self-noise-limited matched-filter SNR ``gamma_g A_k^2 / (beta A_rms^2)``."""
    _check_positive(gamma_g=gamma_g, beta=beta, a_k2=a_k2, a_rms2=a_rms2)
    return gamma_g * a_k2 / (beta * a_rms2)


def mfb_edge(gamma_g, beta, alpha_p):
    """Edge-user form of :func:`mfb_selfnoise`: ``gamma_g alpha_p / beta``."""
    _check_positive(gamma_g=gamma_g, beta=beta, alpha_p=alpha_p)
    return gamma_g * alpha_p / beta


def mfb_combined(snr_selfnoise, snr_thermal, gamma_g):
    """``1 / (1/SNR(g) + ((1 + gamma_g)/gamma_g) / SNR)``; ``gamma_g = inf`` is allowed."""
    _check_positive(snr_selfnoise=snr_selfnoise, snr_thermal=snr_thermal, gamma_g=gamma_g)
    excess = 1.0 if math.isinf(gamma_g) else (1.0 + gamma_g) / gamma_g
    return 1.0 / (1.0 / snr_selfnoise + excess / snr_thermal)


def mfb_direct(H, sigma_n2: float, gamma_g: float) -> np.ndarray:
    """``||h_k||^2 / (sigma_n^2 + nu_g^2)`` with ``nu_g^2 = (sum_j |h_j|^2/N + sigma_n^2) / gamma_g``."""
    H = np.asarray(H)
    col = np.sum(np.abs(H) ** 2, axis=0)
    sigma_y2 = float(np.sum(col)) / H.shape[0] + sigma_n2
    nu_g2 = 0.0 if math.isinf(gamma_g) else sigma_y2 / gamma_g
    return col / (sigma_n2 + nu_g2)


def lmmse_lower_bound(snr_g_sigma, eta_ideal):
    """``SINR >= SNR(g, sigma_n^2) * eta_ideal``."""
    _check_positive(snr_g_sigma=snr_g_sigma, eta_ideal=eta_ideal)
    return snr_g_sigma * eta_ideal


# ----------------------------------------------------------------------------
# LMMSE efficiency of the ideal system


ETA_METHODS = ("analytic", "simulate", "percentile")


@dataclass(frozen=True)
class EtaEstimate:
    eta: float                 # linear, <= 1
    snr_edge_db: float         # SNR_edge where the availability criterion is met (nan for percentile)
    method: str
    n_drops: int
    clamped: bool = False      # raw estimate exceeded 1

    @property
    def eta_db(self) -> float:
        return lin2db(self.eta)

    @property
    def gap_db(self) -> float:
        """Magnitude of the SINR/SNR gap in dB."""
        return -self.eta_db


def _ideal_drops(scenario, n_drops, seed):
    geom = scenario.geometry
    return [drop_users(geom, scenario.n_users, scenario.r_min, scenario.r_max,
                       scenario.delta_omega_min, seed=drop_seed(seed, d)) for d in range(n_drops)]


def _quantile_sinr(scenario, drops, snr_edge_db):
    sc = scenario.with_snr(snr_edge_db)
    sinr = []
    for drop in drops:
        d = apply_power_control(drop, sc)
        sinr.append(lmmse_sinr_all(build_channel(d).H, sc.sigma_n2))
    # SINR reached by an availability fraction of the users
    return -availability_quantile(-np.concatenate(sinr), sc.availability)


def _bisect_snr(func, target, lo, hi, tol):
    """Smallest SNR (dB) in [lo, hi] with ``func(snr) >= target`` for increasing ``func``."""
    if func(hi) < target:
        raise ValueError(f"target not reached below SNR_edge = {hi} dB")
    if func(lo) >= target:
        return lo
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if func(mid) >= target:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def estimate_eta_ideal(scenario: ScenarioSpec, seed: int = 0, method: str = "analytic",
                       n_drops: int = 200, snr_range_db=(-10.0, 50.0), tol_db: float = 0.01,
                       n_symbols: int = 100_000, workers: int = 1) -> EtaEstimate:
    """``SINR_target / SNR_edge`` for the ideal (linear) receive chain.

    ``analytic``: per-user LMMSE SINR over ``n_drops`` drops; SNR_edge is the
    smallest value at which an ``availability`` fraction of users reach the
    SINR target (equivalently the BER target under the Q-function map).
    ``simulate``: same criterion on Monte Carlo BER.
    ``percentile``: the (1 - availability) quantile of per-user efficiency at
    ``scenario.snr_edge_db``.
    Estimates above 1 (possible when many users sit closer than the edge) are
    clamped to 1.
    """
    if method not in ETA_METHODS:
        raise ValueError(f"method must be one of {ETA_METHODS}")
    target = scenario.sinr_target
    lo, hi = snr_range_db
    if method == "percentile":
        eff = []
        for drop in _ideal_drops(scenario, n_drops, seed):
            d = apply_power_control(drop, scenario)
            H = build_channel(d).H
            eff.append(lmmse_sinr_all(H, scenario.sigma_n2) / matched_filter_snr(H, scenario.sigma_n2))
        raw = availability_quantile(np.concatenate(eff), 1.0 - scenario.availability)
        snr_db = math.nan
    elif method == "analytic":
        drops = _ideal_drops(scenario, n_drops, seed)
        snr_db = _bisect_snr(lambda s: _quantile_sinr(scenario, drops, s), target, lo, hi, tol_db)
        raw = target / db2lin(snr_db)
    else:
        from .simulation import find_snr_edge
        res = find_snr_edge(scenario, NonlinearChain.identity(), n_symbols, n_drops, seed,
                            workers, lo, hi)
        if not res.reachable:
            raise ValueError(f"BER target not reached below SNR_edge = {hi} dB")
        snr_db = res.snr_edge_db
        raw = target / db2lin(snr_db)
    return EtaEstimate(min(raw, 1.0), snr_db, method, n_drops, clamped=raw > 1.0)


def scenario_alpha(scenario: ScenarioSpec, gamma_g: float = math.inf, n_drops: int = 200,
                   seed: int = 0) -> float:
    """Power-control factor used by the design equations."""
    if scenario.power_control == "none":
        return analytic_alpha_no_pc(scenario.r_min, scenario.r_max)
    if scenario.power_control == "naive":
        return 1.0
    return ensemble_alpha(scenario, n_drops, seed, gamma_g)


# ----------------------------------------------------------------------------
# Contour between SNR_edge and gamma_g


@dataclass(frozen=True)
class ContourPoint:
    gamma_g: float
    snr_edge: float     # inf where infeasible
    feasible: bool

    @property
    def gamma_g_db(self) -> float:
        return lin2db(self.gamma_g)

    @property
    def snr_edge_db(self) -> float:
        return lin2db(self.snr_edge) if self.feasible else math.inf


def min_gamma(sinr_target, eta_ideal, beta, alpha_p) -> float:
    """Intrinsic SNR below which no finite SNR_edge meets the target."""
    return beta * (sinr_target / eta_ideal) / alpha_p


def snr_edge_bound(gamma_g, sinr_target, eta_ideal, beta, alpha_p) -> float:
    """``((1+gamma_g)/gamma_g) / (eta/T - beta/(gamma_g alpha_p))``; ``inf`` when infeasible."""
    _check_positive(gamma_g=gamma_g, sinr_target=sinr_target, eta_ideal=eta_ideal,
                    beta=beta, alpha_p=alpha_p)
    if math.isinf(gamma_g):
        return sinr_target / eta_ideal
    denom = eta_ideal / sinr_target - beta / (gamma_g * alpha_p)
    if denom <= 0:
        return math.inf
    return ((1.0 + gamma_g) / gamma_g) / denom


def solve_contour(sinr_target, eta_ideal, beta, alpha_p, gamma_g_grid) -> list:
    """SNR_edge needed at each intrinsic SNR of the grid (linear values)."""
    pts = []
    for g in np.atleast_1d(np.asarray(gamma_g_grid, dtype=float)):
        s = snr_edge_bound(float(g), sinr_target, eta_ideal, beta, alpha_p)
        pts.append(ContourPoint(float(g), s, math.isfinite(s)))
    if not any(p.feasible for p in pts):
        gmin = min_gamma(sinr_target, eta_ideal, beta, alpha_p)
        raise ValueError(f"no feasible point: gamma_g must exceed {lin2db(gmin):.2f} dB")
    return pts


def required_gamma(snr_edge, sinr_target, eta_ideal, beta, alpha_p) -> float:
    """Inverse of :func:`snr_edge_bound`: intrinsic SNR needed at a given SNR_edge."""
    _check_positive(snr_edge=snr_edge, sinr_target=sinr_target, eta_ideal=eta_ideal,
                    beta=beta, alpha_p=alpha_p)
    denom = eta_ideal / sinr_target - 1.0 / snr_edge
    if denom <= 0:
        raise ValueError(f"SNR_edge must exceed {lin2db(sinr_target / eta_ideal):.2f} dB")
    return (beta / alpha_p + 1.0 / snr_edge) / denom


def system_snr(gamma_g, snr_edge, beta, alpha_p) -> float:
    """Edge-user ``SNR(g, sigma_n^2)`` from the matched-filter bounds."""
    return mfb_combined(mfb_edge(gamma_g, beta, alpha_p), snr_edge, gamma_g)


# ----------------------------------------------------------------------------
# Hardware-spec search


@dataclass(frozen=True)
class DesignPoint:
    bits: int
    p1db_pb_db: float
    p1db_bb_db: float
    gamma_g_db: float
    gamma_g_db_stderr: float = 0.0
    snr_edge_required_db: float = math.nan

    @property
    def chain(self) -> NonlinearChain:
        return NonlinearChain.from_db(self.bits, self.p1db_pb_db, self.p1db_bb_db)

    @property
    def cost(self):
        """Bits first, then the sum of compression points."""
        return (self.bits, round(self.p1db_pb_db + self.p1db_bb_db, 9), self.p1db_pb_db)


def cascade_gamma_db(bits, p1db_pb_db, p1db_bb_db, n_samples: int = SEARCH_MC_SAMPLES,
                     seed: int = DEFAULT_MC_SEED):
    p = chain_params(NonlinearChain.from_db(bits, p1db_pb_db, p1db_bb_db), n_samples, seed)
    return p.gamma_g_db, p.gamma_g_db_stderr


def search_hw_spec(gamma_target_db: float, bits_grid=DEFAULT_BITS, pb_grid=DEFAULT_P1DB_GRID,
                   bb_grid=DEFAULT_P1DB_GRID, n_samples: int = SEARCH_MC_SAMPLES,
                   seed: int = DEFAULT_MC_SEED) -> list:
    """Pareto set of (b, P1dB_pb, P1dB_bb) reaching ``gamma_target_db``.

    Picks the fewest bits that can reach the target at all, then walks the
    staircase of the two compression points: for each passband value the
    smallest baseband value that reaches the target.  This relies on the
    intrinsic SNR growing with every spec, which holds up to MC error because
    all grid points share one sample set.  Points come back cheapest first.
    """
    bits_grid = sorted(set(int(b) for b in bits_grid))
    pb = sorted(set(float(x) for x in pb_grid))
    bb = sorted(set(float(x) for x in bb_grid))
    if not bits_grid or not pb or not bb:
        raise ValueError("grids must be non-empty")

    def gam(b, i, j):
        return cascade_gamma_db(b, pb[i], bb[j], n_samples, seed)

    best = -math.inf
    for b in bits_grid:
        top = gam(b, len(pb) - 1, len(bb) - 1)[0]
        best = max(best, top)
        if top >= gamma_target_db:
            break
    else:
        raise ValueError(f"target {gamma_target_db:.2f} dB not reachable on the grid; "
                         f"best intrinsic SNR {best:.2f} dB")

    frontier = []
    j = len(bb) - 1
    for i in range(len(pb)):
        if gam(b, i, j)[0] < gamma_target_db:
            continue
        while j > 0 and gam(b, i, j - 1)[0] >= gamma_target_db:
            j -= 1
        if frontier and frontier[-1][1] == j:
            continue   # dominated by the previous passband value
        frontier.append((i, j))
        if j == 0:
            break
    points = []
    for i, j in frontier:
        g, se = gam(b, i, j)
        points.append(DesignPoint(b, pb[i], bb[j], g, se))
    return sorted(points, key=lambda p: p.cost)


def absolute_p1db(normalized_db, input_power_dbm):
    """Normalized compression point (dB over input power) to dBm."""
    return normalized_db + input_power_dbm


def normalized_p1db(absolute_dbm, input_power_dbm):
    return absolute_dbm - input_power_dbm
