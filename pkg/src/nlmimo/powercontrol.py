"""Uplink power control (none / naive / adaptive) and the power-control factor."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .channel import build_channel, drop_seed, drop_users
from .receiver import lmmse_sinr_all
from .scenario import PC_SCHEMES, ScenarioSpec
from .utils import lin2db, stream


@dataclass(frozen=True)
class PowerControlConfig:
    scheme: str = "none"
    sinr_th_db: float | None = None
    n_iter: int = 20
    convergence_tol_db: float = 0.01
    effective_noise: bool = True

    def __post_init__(self):
        if self.scheme not in PC_SCHEMES:
            raise ValueError(f"scheme must be one of {PC_SCHEMES}")
        if self.n_iter < 1:
            raise ValueError("n_iter must be at least 1")
        if self.scheme == "adaptive" and (self.sinr_th_db is None or not math.isfinite(self.sinr_th_db)):
            raise ValueError("adaptive power control needs a finite sinr_th_db")

    @classmethod
    def from_scenario(cls, sc: ScenarioSpec) -> "PowerControlConfig":
        return cls(sc.power_control, lin2db(sc.sinr_th), sc.pc_iterations, sc.pc_tol_db)


@dataclass
class AdaptiveTrace:
    power_db: list = field(default_factory=list)   # per iteration, after the update
    sinr_db: list = field(default_factory=list)    # per iteration, before the update
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.power_db)


def apply_naive(drop):
    """Equalize every received amplitude to that of a user at ``r_max``."""
    if drop.n_users == 0:
        raise ValueError("empty drop")
    return drop.with_power_scale(drop.edge_amplitude**2 / drop.amplitude**2)


def effective_noise_var(drop, sigma_n2: float, gamma_g: float = math.inf) -> float:
    """Thermal plus self-noise per antenna: ``sigma_n2 + (sum_k A_k^2 p_k + sigma_n2) / gamma_g``."""
    if math.isinf(gamma_g):
        return float(sigma_n2)
    sigma_y2 = float(np.sum(drop.received_power)) + sigma_n2
    return float(sigma_n2 + sigma_y2 / gamma_g)


def apply_adaptive(drop, sigma_n2: float, config: PowerControlConfig,
                   gamma_g: float = math.inf):
    """Iteratively back off users whose LMMSE output SINR exceeds the threshold.

    Each round lowers user k by ``max(SINR_k - SINR_th, 0)`` dB.  SINR is
    evaluated with thermal plus self-noise when ``config.effective_noise``,
    thermal noise alone otherwise.  Returns ``(drop, trace)``; the trace
    records whether the power change fell below the tolerance.
    """
    th = config.sinr_th_db
    p_db = lin2db(np.asarray(drop.power_scale, dtype=float))
    trace = AdaptiveTrace()
    cur = drop
    for _ in range(config.n_iter):
        nv = effective_noise_var(cur, sigma_n2, gamma_g) if config.effective_noise else sigma_n2
        sinr_db = lin2db(lmmse_sinr_all(build_channel(cur).H, nv))
        step = np.maximum(sinr_db - th, 0.0)
        p_db = p_db - step
        cur = drop.with_power_scale(10.0 ** (p_db / 10.0))
        trace.sinr_db.append(sinr_db)
        trace.power_db.append(p_db.copy())
        if float(np.max(step)) < config.convergence_tol_db:
            trace.converged = True
            break
    return cur, trace


def apply_power_control(drop, scenario: ScenarioSpec, gamma_g: float = math.inf,
                        config: PowerControlConfig | None = None):
    """Dispatch on the scheme; returns the drop with ``power_scale`` set."""
    cfg = PowerControlConfig.from_scenario(scenario) if config is None else config
    if cfg.scheme == "none":
        return drop.with_power_scale(np.ones(drop.n_users))
    if cfg.scheme == "naive":
        return apply_naive(drop)
    return apply_adaptive(drop, scenario.sigma_n2, cfg, gamma_g)[0]


def _edge_power(drop, rx, edge: str, availability: float) -> float:
    if edge == "r_max":
        return drop.edge_amplitude**2
    if edge == "quantile":
        # received power that all but the weakest (1 - availability) of users reach
        return float(np.quantile(rx, 1.0 - availability, method="inverted_cdf"))
    raise ValueError("edge must be 'r_max' or 'quantile'")


def power_control_factor(drop, edge: str = "r_max", availability: float = 0.95) -> float:
    """Edge received power over the mean received power ``mean_k(A_k^2 p_k)``.

    ``edge="r_max"`` takes an unscaled user at ``r_max`` (no or naive power
    control).  ``edge="quantile"`` takes the received power exceeded by an
    ``availability`` fraction of users, which is what is left of the edge user
    once adaptive control has lowered everyone's power.
    """
    if drop.n_users == 0:
        raise ValueError("empty drop")
    rx = drop.received_power
    ref = _edge_power(drop, rx, edge, availability)
    if np.allclose(rx, ref, rtol=1e-12, atol=0.0):
        return 1.0
    return float(ref / np.mean(rx))


def analytic_alpha_no_pc(r_min: float, r_max: float) -> float:
    """Closed form ``(1 - r_min^2/r_max^2) / (2 ln(r_max/r_min))`` for users uniform in area."""
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    return (1.0 - (r_min / r_max) ** 2) / (2.0 * math.log(r_max / r_min))


def ensemble_alpha_no_pc(r_min: float, r_max: float, n_samples: int = 1_000_000,
                         seed: int = 0) -> float:
    """MC estimate of ``A_edge^2 / E[A^2]`` with ranges uniform in area."""
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    r2 = stream(seed, "alpha").uniform(r_min**2, r_max**2, n_samples)
    # A^2 is proportional to 1/R^2, so the wavelength cancels
    return float((1.0 / r_max**2) / np.mean(1.0 / r2))


def ensemble_alpha(scenario: ScenarioSpec, n_drops: int = 200, seed: int = 0,
                   gamma_g: float = math.inf, edge: str | None = None) -> float:
    """Empirical alpha_p after power control, pooled over ``n_drops`` drops.

    ``edge`` defaults to ``"quantile"`` for adaptive control and ``"r_max"``
    otherwise (see :func:`power_control_factor`).
    """
    if edge is None:
        edge = "quantile" if scenario.power_control == "adaptive" else "r_max"
    geom = scenario.geometry
    rx = []
    for d in range(n_drops):
        drop = drop_users(geom, scenario.n_users, scenario.r_min, scenario.r_max,
                          scenario.delta_omega_min, seed=drop_seed(seed, d))
        rx.append(apply_power_control(drop, scenario, gamma_g).received_power)
    rx = np.concatenate(rx)
    if edge == "r_max":
        ref = scenario.edge_amplitude**2
    elif edge == "quantile":
        ref = float(np.quantile(rx, 1.0 - scenario.availability, method="inverted_cdf"))
    else:
        raise ValueError("edge must be 'r_max' or 'quantile'")
    return float(ref / np.mean(rx))
