"""System-level scenario description shared by the receiver, power control and design code."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .channel import SPEED_OF_LIGHT, ArrayGeometry
from .utils import db2lin, qpsk_required_snr

PC_SCHEMES = ("none", "naive", "adaptive")


@dataclass(frozen=True)
class ScenarioSpec:
    """Cell, array, power-control and QoS settings.

    ``snr_edge_db`` is ``N A_edge^2 / sigma_n^2`` for a user at ``r_max`` and
    fixes the thermal noise.  The SINR target is the Es/N0 at which QPSK
    reaches ``ber_target`` on AWGN.
    """

    n_antennas: int = 256
    n_users: int = 16
    r_min: float = 5.0
    r_max: float = 100.0
    spacing: float = 0.5
    carrier_hz: float = 140e9
    power_control: str = "none"
    sinr_th_db: float | None = None
    pc_iterations: int = 20
    pc_tol_db: float = 0.01
    snr_edge_db: float = 10.0
    ber_target: float = 1e-3
    availability: float = 0.95
    delta_omega_min: float | None = None

    def __post_init__(self):
        if self.power_control not in PC_SCHEMES:
            raise ValueError(f"power_control must be one of {PC_SCHEMES}")
        if not 0 < self.n_users <= self.n_antennas:
            raise ValueError("need 0 < K <= N (load factor in (0, 1])")
        if not 0 < self.availability < 1:
            raise ValueError("availability must lie in (0, 1)")
        if not 0 < self.ber_target < 0.5:
            raise ValueError("ber_target must lie in (0, 0.5)")

    @property
    def beta(self) -> float:
        return self.n_users / self.n_antennas

    @property
    def geometry(self) -> ArrayGeometry:
        return ArrayGeometry(self.n_antennas, self.spacing, SPEED_OF_LIGHT / self.carrier_hz)

    @property
    def edge_amplitude(self) -> float:
        return float(self.geometry.friis_amplitude(self.r_max))

    @property
    def sigma_n2(self) -> float:
        return self.n_antennas * self.edge_amplitude**2 / db2lin(self.snr_edge_db)

    @property
    def sinr_target(self) -> float:
        return qpsk_required_snr(self.ber_target)

    @property
    def sinr_th(self) -> float:
        """Adaptive power-control threshold (linear); defaults to the SINR target."""
        return self.sinr_target if self.sinr_th_db is None else db2lin(self.sinr_th_db)

    def with_snr(self, snr_edge_db: float) -> "ScenarioSpec":
        return replace(self, snr_edge_db=float(snr_edge_db))
