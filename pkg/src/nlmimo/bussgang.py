"""Bussgang linearization, intrinsic SNR and the equivalent-AWGN model."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from . import _quad
from .nonlinearity import NonlinearChain
from .utils import complex_normal, lin2db, stream

DEFAULT_MC_SAMPLES = 1_000_000
DEFAULT_MC_SEED = 7
MIN_BLOCKS = 16
MAX_BLOCK = 1 << 18
# sigma_g^2 at or below this fraction of E|g|^2 counts as an exact linear map
IDEAL_RTOL = 1e-12


@dataclass(frozen=True)
class BussgangParams:
    """Bussgang gain ``a``, error variance and intrinsic SNR of a nonlinearity.

    ``gamma_g = |a|^2 * input_power / sigma_g2``, which reduces to
    ``|a|^2 / sigma_g2`` in the normalized (unit input power) convention and
    is unchanged by :func:`normalize_params`.  An exactly linear map has
    ``sigma_g2 == 0``, ``ideal=True`` and ``gamma_g = inf``.
    """

    a: complex
    sigma_g2: float
    gamma_g: float
    n_samples: int = 0
    input_power: float = 1.0
    ideal: bool = False
    a_stderr: float = 0.0
    sigma_g2_stderr: float = 0.0
    gamma_g_db_stderr: float = 0.0

    @property
    def gamma_g_db(self) -> float:
        return math.inf if self.ideal else lin2db(self.gamma_g)


def _params(a, eg2, ey2, n, input_power, **stderr) -> BussgangParams:
    sigma_g2 = eg2 - abs(a) ** 2 * ey2
    if sigma_g2 <= IDEAL_RTOL * max(eg2, 1e-300):
        return BussgangParams(a, 0.0, math.inf, n, input_power, ideal=True, **stderr)
    return BussgangParams(a, float(sigma_g2), float(abs(a) ** 2 * input_power / sigma_g2),
                          n, input_power, **stderr)


def _block_sizes(n: int):
    n_blocks = max(MIN_BLOCKS, -(-n // MAX_BLOCK))
    base, extra = divmod(n, n_blocks)
    return [base + (1 if i < extra else 0) for i in range(n_blocks)]


def _draw(rng, size, input_power, real_input):
    if real_input:
        return math.sqrt(input_power) * rng.standard_normal(size)
    return complex_normal(rng, size, input_power)


def bussgang_mc(g, n_samples: int = DEFAULT_MC_SAMPLES, seed: int = DEFAULT_MC_SEED,
                input_power: float = 1.0, real_input: bool = False) -> BussgangParams:
    """Monte Carlo Bussgang parameters for Gaussian input of power ``input_power``.

    Samples come from per-block counter-based streams, so the result depends
    only on ``(n_samples, seed)``.  Standard errors use batch means over the
    blocks.
    """
    if n_samples < 10_000:
        raise ValueError("n_samples must be at least 1e4")
    sizes = _block_sizes(n_samples)
    s_gy = np.empty(len(sizes), dtype=complex)
    s_yy = np.empty(len(sizes))
    s_gg = np.empty(len(sizes))
    for i, m in enumerate(sizes):
        y = _draw(stream(seed, "bussgang", i), m, input_power, real_input)
        z = np.asarray(g(y))
        s_gy[i] = np.vdot(y, z)
        s_yy[i] = np.vdot(y, y).real
        s_gg[i] = np.vdot(z, z).real
    n = float(n_samples)
    a = s_gy.sum() / s_yy.sum()
    a = a.real if abs(a.imag) == 0 else complex(a)

    counts = np.asarray(sizes, dtype=float)
    a_b = s_gy / s_yy
    sig_b = s_gg / counts - np.abs(a_b) ** 2 * s_yy / counts
    k = len(sizes)
    a_se = float(np.std(np.abs(a_b), ddof=1) / math.sqrt(k))
    sig_se = float(np.std(sig_b, ddof=1) / math.sqrt(k))
    with np.errstate(divide="ignore", invalid="ignore"):
        gam_b = 10 * np.log10(np.abs(a_b) ** 2 * (s_yy / counts) / sig_b)
    gam_se = float(np.std(gam_b, ddof=1) / math.sqrt(k)) if np.all(np.isfinite(gam_b)) else 0.0
    return _params(a, s_gg.sum() / n, s_yy.sum() / n, n_samples, input_power,
                   a_stderr=a_se, sigma_g2_stderr=sig_se, gamma_g_db_stderr=gam_se)


def bussgang_quadrature(g, input_power: float = 1.0, real_input: bool = False) -> BussgangParams:
    """Bussgang parameters by 1-D adaptive quadrature.

    Radial stages reduce to integrals over the Rayleigh envelope; separable
    (per-I/Q) stages to integrals over a real Gaussian.  Anything else is
    rejected.
    """
    symmetry = getattr(g, "symmetry", None)
    if symmetry not in ("radial", "separable"):
        raise ValueError(f"{type(g).__name__} is neither radially symmetric nor I/Q separable")
    if symmetry == "radial":
        def scalar(x):
            return math.copysign(g.envelope(abs(x)), x)
    else:
        def scalar(x):
            return float(g.scalar(x))
    kinks = g.breakpoints()

    if symmetry == "radial" and not real_input:
        e_gy = _quad.rayleigh_expect(lambda r: r * g.envelope(r), input_power, kinks)
        e_gg = _quad.rayleigh_expect(lambda r: g.envelope(r) ** 2, input_power, kinks)
    else:
        # complex separable input: I and Q each carry half the power
        var, mult = (input_power, 1.0) if real_input else (input_power / 2.0, 2.0)
        e_gy = mult * _quad.gauss_expect_even(lambda x: x * scalar(x), var, kinks)
        e_gg = mult * _quad.gauss_expect_even(lambda x: scalar(x) ** 2, var, kinks)
    a = e_gy / input_power
    return _params(a, e_gg, input_power, 0, input_power)


def bussgang_params(g, n_samples: int = DEFAULT_MC_SAMPLES, seed: int = DEFAULT_MC_SEED,
                    input_power: float = 1.0, real_input: bool = False) -> BussgangParams:
    """Quadrature where the stage allows it, Monte Carlo otherwise."""
    if getattr(g, "symmetry", None) in ("radial", "separable"):
        return bussgang_quadrature(g, input_power, real_input)
    return bussgang_mc(g, n_samples, seed, input_power, real_input)


@lru_cache(maxsize=4096)
def chain_params(chain: NonlinearChain, n_samples: int = DEFAULT_MC_SAMPLES,
                 seed: int = DEFAULT_MC_SEED) -> BussgangParams:
    """Cached normalized Bussgang parameters of a cascade."""
    if chain.is_identity:
        return BussgangParams(1.0, 0.0, math.inf, 0, 1.0, ideal=True)
    return bussgang_mc(chain, n_samples, seed)


def normalize_params(raw: BussgangParams, input_power: float | None = None) -> BussgangParams:
    """Map parameters measured at ``input_power`` to the unit-power convention."""
    p = raw.input_power if input_power is None else input_power
    if not p > 0:
        raise ValueError("input_power must be positive")
    return replace(raw, sigma_g2=raw.sigma_g2 / p, input_power=1.0,
                   sigma_g2_stderr=raw.sigma_g2_stderr / p)


def orthogonality_residual(g, a, n_samples: int = DEFAULT_MC_SAMPLES, seed: int = 11,
                           input_power: float = 1.0):
    """``|mean((g(y) - a y) y*)|`` on a fresh sample, with its standard error."""
    rng = stream(seed, "orthogonality")
    y = complex_normal(rng, n_samples, input_power)
    prod = (np.asarray(g(y)) - a * y) * np.conj(y)
    stderr = math.sqrt((np.var(prod.real) + np.var(prod.imag)) / n_samples)
    return float(abs(prod.mean())), stderr


@dataclass(frozen=True)
class CovarianceCheck:
    residual: float
    stderr: float
    a: complex
    cross: complex


def check_covariance_preservation(g, rho: complex, n_samples: int = DEFAULT_MC_SAMPLES,
                                  seed: int = 13) -> CovarianceCheck:
    """Compare ``mean(g(y) z*)`` with ``a * rho`` for unit-power jointly Gaussian ``(y, z)``."""
    if abs(rho) > 1:
        raise ValueError("|rho| must not exceed 1")
    a = bussgang_mc(g, n_samples, seed).a
    rng = stream(seed, "covariance")
    y = complex_normal(rng, n_samples)
    w = complex_normal(rng, n_samples)
    z = np.conj(rho) * y + math.sqrt(1.0 - abs(rho) ** 2) * w
    prod = np.asarray(g(y)) * np.conj(z)
    cross = prod.mean()
    stderr = math.sqrt((np.var(prod.real) + np.var(prod.imag)) / n_samples)
    return CovarianceCheck(float(abs(cross - a * rho)), stderr, a, complex(cross))


@dataclass(frozen=True)
class VectorBussgang:
    gains: np.ndarray
    error_vars: np.ndarray

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.gains)


def vector_bussgang(g, per_antenna_powers, n_samples: int = DEFAULT_MC_SAMPLES,
                    seed: int = DEFAULT_MC_SEED) -> VectorBussgang:
    """Per-antenna scalar Bussgang fits assembled into a diagonal gain matrix.

    Every antenna uses the same seed, so equal powers give identical entries.
    """
    powers = np.asarray(per_antenna_powers, dtype=float)
    if np.any(powers <= 0):
        raise ValueError("per-antenna powers must be positive")
    cache = {}
    gains, errs = [], []
    for p in powers:
        if p not in cache:
            cache[p] = bussgang_params(g, n_samples, seed, input_power=float(p))
        gains.append(cache[p].a)
        errs.append(cache[p].sigma_g2)
    return VectorBussgang(np.asarray(gains), np.asarray(errs, dtype=float))


@dataclass(frozen=True)
class LinearizedModel:
    sigma_y2: float
    gamma_g: float
    nu_g2: float
    sigma_n2: float

    @property
    def effective_noise_var(self) -> float:
        return self.sigma_n2 + self.nu_g2


def build_linearized_model(sigma_y2: float, gamma_g: float, sigma_n2: float) -> LinearizedModel:
    """Effective-noise model: self-noise variance ``sigma_y2 / gamma_g`` added to thermal noise."""
    if sigma_y2 < 0 or sigma_n2 < 0:
        raise ValueError("powers must be non-negative")
    if not gamma_g > 0:
        raise ValueError("gamma_g must be positive")
    nu_g2 = 0.0 if math.isinf(gamma_g) else sigma_y2 / gamma_g
    return LinearizedModel(sigma_y2, gamma_g, nu_g2, sigma_n2)
