"""LoS multiuser geometry, steering-vector channels and received-signal diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .utils import complex_normal, stream

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_CARRIER_HZ = 140e9
FIELD_OF_VIEW = math.pi / 3
MAX_REJECTIONS = 100_000


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform linear array; ``spacing`` is d_x in wavelengths."""

    n_antennas: int
    spacing: float = 0.5
    wavelength: float = SPEED_OF_LIGHT / DEFAULT_CARRIER_HZ

    def __post_init__(self):
        if self.n_antennas < 1:
            raise ValueError("need at least one antenna")
        if self.spacing <= 0 or self.wavelength <= 0:
            raise ValueError("spacing and wavelength must be positive")

    @property
    def default_separation(self) -> float:
        """Half the 3 dB beamwidth in spatial frequency."""
        return 2.783 / self.n_antennas

    def spatial_frequency(self, theta):
        return 2.0 * np.pi * self.spacing * np.sin(theta)

    def friis_amplitude(self, radius):
        return self.wavelength / (4.0 * np.pi * np.asarray(radius, dtype=float))


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class UserDrop:
    """One placement of K users.

    Spatial frequencies and Friis amplitudes are derived from the stored
    range/angle and the array; ``power_scale`` holds power-control factors.
    """

    radius: np.ndarray
    theta: np.ndarray
    phase: np.ndarray
    power_scale: np.ndarray
    geometry: ArrayGeometry
    r_min: float
    r_max: float

    def __post_init__(self):
        k = len(self.radius)
        for name in ("radius", "theta", "phase", "power_scale"):
            arr = _frozen(getattr(self, name))
            if arr.shape != (k,):
                raise ValueError(f"{name} must have one entry per user")
            object.__setattr__(self, name, arr)

    @property
    def n_users(self) -> int:
        return len(self.radius)

    @property
    def omega(self) -> np.ndarray:
        return self.geometry.spatial_frequency(self.theta)

    @property
    def amplitude(self) -> np.ndarray:
        return self.geometry.friis_amplitude(self.radius)

    @property
    def received_power(self) -> np.ndarray:
        """A_k^2 * power_scale_k."""
        return self.amplitude**2 * self.power_scale

    @property
    def edge_amplitude(self) -> float:
        return float(self.geometry.friis_amplitude(self.r_max))

    def with_power_scale(self, power_scale) -> "UserDrop":
        return replace(self, power_scale=np.asarray(power_scale, dtype=float))

    def to_record(self) -> dict:
        g = self.geometry
        return {
            "n_antennas": g.n_antennas,
            "spacing": g.spacing,
            "wavelength": g.wavelength,
            "r_min": self.r_min,
            "r_max": self.r_max,
            "users": [
                {"R": float(r), "theta": float(t), "phi": float(p), "power_scale": float(s)}
                for r, t, p, s in zip(self.radius, self.theta, self.phase, self.power_scale)
            ],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "UserDrop":
        geom = ArrayGeometry(int(rec["n_antennas"]), float(rec["spacing"]), float(rec["wavelength"]))
        users = rec["users"]
        return cls(
            radius=[u["R"] for u in users],
            theta=[u["theta"] for u in users],
            phase=[u["phi"] for u in users],
            power_scale=[u.get("power_scale", 1.0) for u in users],
            geometry=geom,
            r_min=float(rec["r_min"]),
            r_max=float(rec["r_max"]),
        )


def _sample_positions(rng, m, r_min, r_max):
    radius = np.sqrt(rng.uniform(r_min**2, r_max**2, m))
    theta = rng.uniform(-FIELD_OF_VIEW, FIELD_OF_VIEW, m)
    return radius, theta


def _too_close(omega, min_sep):
    """Users that sit within ``min_sep`` of a lower-indexed user (which stays put)."""
    k = omega.size
    bad = np.zeros(k, dtype=bool)
    if k < 2 or min_sep <= 0:
        return bad
    order = np.argsort(omega, kind="stable")
    gaps = np.diff(omega[order])
    for i in np.flatnonzero(gaps < min_sep):
        bad[max(order[i], order[i + 1])] = True
    return bad


def drop_users(geometry: ArrayGeometry, n_users: int, r_min: float = 5.0, r_max: float = 100.0,
               delta_omega_min: float | None = None, seed: int = 0,
               max_rejections: int = MAX_REJECTIONS) -> UserDrop:
    """Place users uniformly (in area) in the annular sector |theta| <= pi/3.

    Users closer than ``delta_omega_min`` in spatial frequency to another user
    are re-drawn one at a time until every pair is separated.
    """
    if n_users < 1:
        raise ValueError("need at least one user")
    if not 0 < r_min < r_max:
        raise ValueError("need 0 < r_min < r_max")
    min_sep = geometry.default_separation if delta_omega_min is None else float(delta_omega_min)
    omega_span = 2.0 * geometry.spatial_frequency(FIELD_OF_VIEW)
    if n_users > 1 and n_users * min_sep >= omega_span:
        raise ValueError(
            f"cannot pack {n_users} users with spatial-frequency separation {min_sep:.4g} "
            f"into a span of {omega_span:.4g}")

    rng = stream(seed, "drop")
    radius, theta = _sample_positions(rng, n_users, r_min, r_max)
    rejections = 0
    while True:
        bad = _too_close(geometry.spatial_frequency(theta), min_sep)
        n_bad = int(bad.sum())
        if n_bad == 0:
            break
        rejections += n_bad
        if rejections > max_rejections:
            raise RuntimeError(
                f"spatial-frequency separation {min_sep:.4g} not met after {max_rejections} re-draws")
        radius[bad], theta[bad] = _sample_positions(rng, n_bad, r_min, r_max)
    phase = rng.uniform(0.0, 2.0 * np.pi, n_users)
    return UserDrop(radius, theta, phase, np.ones(n_users), geometry, r_min, r_max)


def drop_seed(seed: int, index: int) -> int:
    """Seed of the ``index``-th drop in an ensemble keyed by ``seed``."""
    return int(stream(seed, "drop-seed", index).integers(0, 2**63 - 1))


def mean_amplitude2(r_min: float, r_max: float, wavelength: float) -> float:
    """E[A^2] for users uniform in area over r_min <= R <= r_max."""
    return (wavelength / (4 * math.pi)) ** 2 * 2 * math.log(r_max / r_min) / (r_max**2 - r_min**2)


@dataclass(frozen=True, eq=False)
class ChannelMatrix:
    H: np.ndarray
    drop: UserDrop | None = field(default=None, repr=False)


def steering_matrix(omega, n_antennas: int) -> np.ndarray:
    m = np.arange(n_antennas)[:, None]
    return np.exp(1j * m * np.asarray(omega, dtype=float)[None, :])


def build_channel(drop: UserDrop, geometry: ArrayGeometry | None = None) -> ChannelMatrix:
    """Column k is ``A_k sqrt(p_k) e^{j phi_k} [1, e^{j Omega_k}, ..., e^{j (N-1) Omega_k}]``."""
    geom = drop.geometry if geometry is None else geometry
    gain = drop.amplitude * np.sqrt(drop.power_scale) * np.exp(1j * drop.phase)
    H = steering_matrix(geom.spatial_frequency(drop.theta), geom.n_antennas) * gain[None, :]
    return ChannelMatrix(H, drop)


def spatial_crosscorr(delta_omega, n_antennas: int):
    """|sin(N dW/2) / (N sin(dW/2))|, equal to 1 at dW = 0."""
    d = np.asarray(delta_omega, dtype=float)
    num = np.sin(n_antennas * d / 2.0)
    den = n_antennas * np.sin(d / 2.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(np.abs(den) < 1e-300, 1.0, np.abs(num / den))
    return float(out) if out.ndim == 0 else out


def received_samples(H, symbols, sigma_n2: float, seed: int = 0, key=()) -> np.ndarray:
    """``y = H x + n`` for a K x T symbol block; noise is CN(0, sigma_n2 I)."""
    H = np.asarray(H)
    x = np.asarray(symbols)
    y = H @ x if H.shape[1] else np.zeros((H.shape[0], x.shape[-1]), dtype=complex)
    if sigma_n2 > 0:
        y = y + complex_normal(stream(seed, "noise", *key), y.shape, sigma_n2)
    return y


def gaussianity_kl(samples, bins: int = 100) -> float:
    """Histogram KL divergence (nats) of standardized samples from N(0, 1).

    Bins span +-5 sigma; every bin gets one extra count so empty bins stay
    finite.
    """
    s = np.asarray(samples, dtype=float).ravel()
    if s.size < 10_000:
        raise ValueError("need at least 1e4 samples")
    s = (s - s.mean()) / s.std()
    edges = np.linspace(-5.0, 5.0, bins + 1)
    counts, _ = np.histogram(s, edges)
    p = (counts + 1.0) / (counts.sum() + bins)
    q = np.diff(stats.norm.cdf(edges))
    q = q / q.sum()
    return float(np.sum(p * np.log(p / q)))
