"""Massive-MIMO uplink design with per-antenna nonlinearities.

Bussgang linearization of receive-chain nonlinearities, LoS multiuser
simulation with LMMSE detection, power control and an analytical framework
that maps QoS targets to hardware specs.
"""

from .bussgang import BussgangParams, bussgang_mc, bussgang_params, bussgang_quadrature, chain_params
from .channel import ArrayGeometry, UserDrop, build_channel, drop_users
from .framework import (DesignPoint, estimate_eta_ideal, lmmse_lower_bound, mfb_combined,
                        mfb_selfnoise, search_hw_spec, snr_edge_bound, solve_contour)
from .nonlinearity import (Limiter, NonlinearChain, ThirdOrderSaturated, design_lloyd_max,
                           design_uniform_quantizer)
from .powercontrol import analytic_alpha_no_pc, apply_adaptive, apply_naive, power_control_factor
from .receiver import efficiency, lmmse_build, lmmse_sinr, lmmse_sinr_all
from .scenario import ScenarioSpec
from .simulation import OutageReport, ber_monte_carlo, find_snr_edge

__version__ = "0.1.0"
