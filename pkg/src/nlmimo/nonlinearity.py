"""Memoryless receive-chain nonlinearities.

Every stage is a frozen dataclass that can be called on a numpy array of
complex baseband samples.  Stages also advertise their symmetry so that the
Bussgang module can pick an exact quadrature path:

* ``"radial"`` stages act on the complex envelope and preserve phase
  (``g(y) = y/|y| * envelope(|y|)``);
* ``"separable"`` stages act on I and Q independently with the same odd real
  function (``g(y) = scalar(Re y) + j scalar(Im y)``).

Inside a :class:`NonlinearChain` the compression points and thresholds are
normalized: passband stages are referred to the complex input power, baseband
stages to the per-dimension (I or Q) input power.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property, lru_cache
from typing import ClassVar

import numpy as np
from scipy import optimize, stats

from . import _quad
from .utils import complex_normal, stream

# 0.44 / 3 is the cubic coefficient per unit P1dB.
P1DB_COEFF = 0.44

PASSBAND = "passband"
BASEBAND = "baseband"


def _float_array(y):
    y = np.asarray(y)
    if not (np.issubdtype(y.dtype, np.floating) or np.issubdtype(y.dtype, np.complexfloating)):
        y = y.astype(float)
    return y


def _restore(y_in, out):
    return out.item() if np.ndim(y_in) == 0 else out


def _unit_phase(y, mag):
    return np.divide(y, mag, out=np.zeros_like(y), where=mag > 0)


def _third_order_real(x, p1db):
    x = np.asarray(x, dtype=float)
    x2 = x * x
    out = x * (1.0 - (P1DB_COEFF / (3.0 * p1db)) * x2)
    clip = x2 > p1db / P1DB_COEFF
    if np.any(clip):
        out = np.asarray(out)
        out[clip] = np.sign(x[clip]) * math.sqrt(p1db)
    return out


def _limiter_real(x, gain, power_threshold):
    gx = gain * x
    return np.where(gx * gx <= power_threshold, gx, np.sign(x) * math.sqrt(power_threshold))


def _per_dimension(func, y):
    if np.iscomplexobj(y):
        out = np.empty(np.shape(y), dtype=complex)
        out.real = func(y.real)
        out.imag = func(y.imag)
        return out
    return func(y)


# ----------------------------------------------------------------------------
# Stage types


@dataclass(frozen=True)
class Identity:
    symmetry: ClassVar[str] = "radial"

    def __call__(self, y):
        return y

    def envelope(self, r):
        return r

    def breakpoints(self):
        return ()


@dataclass(frozen=True)
class HardLimiter:
    """Polar hard limiter ``y / |y|`` (unit output envelope)."""

    symmetry: ClassVar[str] = "radial"

    def __call__(self, y):
        y_arr = _float_array(y)
        return _restore(y, _unit_phase(y_arr, np.abs(y_arr)))

    def envelope(self, r):
        return 1.0 if r > 0 else 0.0

    def breakpoints(self):
        return ()


@dataclass(frozen=True)
class Limiter:
    gain: float = 1.0
    power_threshold: float = 1.0
    domain: str = PASSBAND

    def __post_init__(self):
        if self.gain <= 0 or self.power_threshold <= 0:
            raise ValueError("limiter gain and power threshold must be positive")
        if self.domain not in (PASSBAND, BASEBAND):
            raise ValueError(f"unknown limiter domain {self.domain!r}")

    @property
    def symmetry(self):
        return "radial" if self.domain == PASSBAND else "separable"

    def __call__(self, y):
        return apply_limiter(y, self)

    def envelope(self, r):
        gr = self.gain * r
        return gr if gr * gr <= self.power_threshold else math.sqrt(self.power_threshold)

    def scalar(self, x):
        return _limiter_real(x, self.gain, self.power_threshold)

    def breakpoints(self):
        return (math.sqrt(self.power_threshold) / self.gain,)

    def scaled(self, power: float) -> "Limiter":
        return replace(self, power_threshold=self.power_threshold * power)


@dataclass(frozen=True)
class ThirdOrderSaturated:
    """Unity-gain saturated cubic parametrized by its 1 dB compression point (linear)."""

    p1db: float
    domain: str = PASSBAND

    def __post_init__(self):
        if not self.p1db > 0:
            raise ValueError("p1db must be positive")
        if self.domain not in (PASSBAND, BASEBAND):
            raise ValueError(f"unknown third-order domain {self.domain!r}")

    @property
    def symmetry(self):
        return "radial" if self.domain == PASSBAND else "separable"

    def __call__(self, y):
        if self.domain == PASSBAND:
            return apply_third_order_complex(y, self.p1db)
        return apply_third_order_baseband(y, self.p1db)

    def envelope(self, r):
        return float(_third_order_real(r, self.p1db))

    def scalar(self, x):
        return _restore(x, _third_order_real(x, self.p1db))

    def breakpoints(self):
        return (math.sqrt(self.p1db / P1DB_COEFF),)

    def scaled(self, power: float) -> "ThirdOrderSaturated":
        return replace(self, p1db=self.p1db * power)


def apply_limiter(y, lim: Limiter):
    """Clip ``G*y`` at output power ``P_th``.

    Passband limiters clamp the complex envelope and keep the phase; baseband
    limiters clamp I and Q separately.
    """
    y_arr = _float_array(y)
    if lim.domain == BASEBAND:
        out = _per_dimension(lambda x: _limiter_real(x, lim.gain, lim.power_threshold), y_arr)
        return _restore(y, out)
    gy = lim.gain * y_arr
    mag = np.abs(y_arr)
    clipped = _unit_phase(y_arr, mag) * math.sqrt(lim.power_threshold)
    out = np.where(np.abs(gy) ** 2 <= lim.power_threshold, gy, clipped)
    return _restore(y, out)


def apply_third_order_complex(y, p1db: float):
    """Saturated cubic on the complex envelope; branch boundary kept exactly as written."""
    y_arr = _float_array(y)
    mag2 = y_arr.real**2 + y_arr.imag**2 if np.iscomplexobj(y_arr) else y_arr * y_arr
    out = y_arr * (1.0 - (P1DB_COEFF / (3.0 * p1db)) * mag2)
    clip = mag2 > p1db / P1DB_COEFF
    if np.any(clip):
        out = np.asarray(out)
        out[clip] = y_arr[clip] * (math.sqrt(p1db) / np.sqrt(mag2[clip]))
    return _restore(y, out)


def apply_third_order_baseband(y, p1db: float):
    y_arr = _float_array(y)
    return _restore(y, _per_dimension(lambda x: _third_order_real(x, p1db), y_arr))


# ----------------------------------------------------------------------------
# Quantizers


def _gaussian_bin_moments(edges):
    """Probability, first and second partial moments of N(0,1) over each bin."""
    edges = np.asarray(edges, dtype=float)
    lo, hi = edges[:-1], edges[1:]
    pdf_lo, pdf_hi = stats.norm.pdf(lo), stats.norm.pdf(hi)
    prob = np.where(lo >= 0, stats.norm.sf(lo) - stats.norm.sf(hi),
                    stats.norm.cdf(hi) - stats.norm.cdf(lo))
    m1 = pdf_lo - pdf_hi
    with np.errstate(invalid="ignore"):
        xpdf_lo = np.where(np.isfinite(lo), lo * pdf_lo, 0.0)
        xpdf_hi = np.where(np.isfinite(hi), hi * pdf_hi, 0.0)
    m2 = prob + xpdf_lo - xpdf_hi
    return prob, m1, m2


def quantizer_mse(thresholds, levels) -> float:
    """E[(Q(x) - x)^2] for x ~ N(0,1), evaluated bin by bin in closed form."""
    levels = np.asarray(levels, dtype=float)
    edges = np.concatenate([[-np.inf], np.asarray(thresholds, dtype=float), [np.inf]])
    prob, m1, m2 = _gaussian_bin_moments(edges)
    return float(np.sum(m2 - 2.0 * levels * m1 + levels**2 * prob))


def _uniform_levels(bits: int, step: float):
    n = 2**bits
    idx = np.arange(n)
    levels = (idx - n / 2 + 0.5) * step
    thresholds = (np.arange(1, n) - n / 2) * step
    return levels, thresholds


def uniform_mse(step: float, bits: int) -> float:
    levels, thresholds = _uniform_levels(bits, step)
    return quantizer_mse(thresholds, levels)


@dataclass(frozen=True)
class QuantizerSpec:
    """Scalar quantizer applied to each real dimension (2**bits output levels).

    Uniform quantizers have thresholds at integer multiples of ``step`` and
    levels at odd multiples of ``step/2``; inputs beyond the outermost
    threshold land on the outermost level.  Inputs exactly on a threshold go
    to the upper bin.
    """

    bits: int
    kind: str = "uniform"
    step: float | None = None
    levels: tuple = ()
    thresholds: tuple = ()
    mse: float = math.nan
    converged: bool = True
    iterations: int = 0

    symmetry: ClassVar[str] = "separable"

    def __post_init__(self):
        if not 1 <= self.bits <= 8:
            raise ValueError("bits must be in 1..8")
        if self.kind == "uniform":
            if self.step is None or self.step <= 0:
                raise ValueError("uniform quantizer needs a positive step")
            if not self.levels:
                levels, thresholds = _uniform_levels(self.bits, self.step)
                object.__setattr__(self, "levels", tuple(levels.tolist()))
                object.__setattr__(self, "thresholds", tuple(thresholds.tolist()))
        elif self.kind == "lloyd_max":
            if len(self.levels) != 2**self.bits or len(self.thresholds) != 2**self.bits - 1:
                raise ValueError("lloyd_max quantizer needs 2**bits levels and 2**bits-1 thresholds")
        else:
            raise ValueError(f"unknown quantizer kind {self.kind!r}")

    @cached_property
    def _levels(self):
        return np.asarray(self.levels)

    @cached_property
    def _thresholds(self):
        return np.asarray(self.thresholds)

    def scalar(self, x):
        if self.kind == "uniform":
            n = 2**self.bits
            idx = np.clip(np.floor(x / self.step) + n / 2, 0, n - 1)
            return (idx - n / 2 + 0.5) * self.step
        return self._levels[np.searchsorted(self._thresholds, x, side="right")]

    def __call__(self, y):
        return apply_quantizer(y, self)

    def breakpoints(self):
        return tuple(t for t in self.thresholds if t > 0)


@lru_cache(maxsize=None)
def design_uniform_quantizer(bits: int) -> QuantizerSpec:
    """MSE-optimal overloaded uniform quantizer for a standard normal input."""
    if not 1 <= bits <= 8:
        raise ValueError("bits must be in 1..8")
    res = optimize.minimize_scalar(uniform_mse, bounds=(0.01, 4.0), args=(bits,),
                                   method="bounded", options={"xatol": 1e-8})
    step = float(res.x)
    return QuantizerSpec(bits=bits, kind="uniform", step=step, mse=uniform_mse(step, bits))


def design_lloyd_max(bits: int, tol: float = 1e-10, max_iter: int = 10_000) -> QuantizerSpec:
    """Lloyd iteration (centroid, then midpoint) for a standard normal source.

    Starts from the optimal uniform levels.  If ``max_iter`` is reached the
    last iterate is returned with ``converged=False``.
    """
    if not 1 <= bits <= 8:
        raise ValueError("bits must be in 1..8")
    levels = np.asarray(design_uniform_quantizer(bits).levels)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        thresholds = 0.5 * (levels[:-1] + levels[1:])
        edges = np.concatenate([[-np.inf], thresholds, [np.inf]])
        prob, m1, _ = _gaussian_bin_moments(edges)
        new = m1 / prob
        change = np.max(np.abs(new - levels))
        levels = new
        if change < tol:
            converged = True
            break
    thresholds = 0.5 * (levels[:-1] + levels[1:])
    return QuantizerSpec(bits=bits, kind="lloyd_max", levels=tuple(levels.tolist()),
                         thresholds=tuple(thresholds.tolist()),
                         mse=quantizer_mse(thresholds, levels), converged=converged, iterations=it)


def apply_quantizer(y, q: QuantizerSpec):
    """Quantize I and Q independently; input is assumed scaled to unit variance per dimension."""
    y_arr = _float_array(y)
    return _restore(y, _per_dimension(q.scalar, y_arr))


def quantizer_output_power(q: QuantizerSpec) -> float:
    """E[Q(x)^2] for x ~ N(0,1)."""
    edges = np.concatenate([[-np.inf], q.thresholds, [np.inf]])
    prob, _, _ = _gaussian_bin_moments(edges)
    return float(np.sum(prob * np.asarray(q.levels) ** 2))


# ----------------------------------------------------------------------------
# Cascade

AGC_MC_SAMPLES = 1 << 21
AGC_MC_SEED = 20_240_601


def _stage_output_power(stage, ref_power: float) -> float:
    """E|stage(y)|^2 for unit-power complex Gaussian y; the stage is referred to ``ref_power``."""
    s = stage.scaled(ref_power)
    if s.symmetry == "radial":
        return _quad.rayleigh_expect(lambda r: s.envelope(r) ** 2, 1.0, s.breakpoints())
    return 2.0 * _quad.gauss_expect_even(lambda x: float(s.scalar(x)) ** 2, 0.5, s.breakpoints())


@lru_cache(maxsize=256)
def _pre_agc_power(passband, baseband) -> float:
    if passband is None and baseband is None:
        return 1.0
    if baseband is None:
        return _stage_output_power(passband, 1.0)
    if passband is None:
        return _stage_output_power(baseband, 0.5)
    # No closed form for the two-stage cascade; fixed-seed high-sample estimate.
    y = complex_normal(stream(AGC_MC_SEED, "agc"), AGC_MC_SAMPLES)
    z = baseband.scaled(0.5)(passband(y))
    return float(np.mean(z.real**2 + z.imag**2))


@dataclass(frozen=True)
class NonlinearChain:
    """passband stage -> baseband stage -> AGC -> quantizer (each optional).

    Stage parameters are normalized: the passband stage is referred to the
    complex input power and the baseband stage to the per-dimension input
    power.  The AGC scales I and Q to unit variance right before the
    quantizer, using the exact (ideal) pre-quantizer power.
    """

    passband: ThirdOrderSaturated | Limiter | None = None
    baseband: ThirdOrderSaturated | Limiter | None = None
    quantizer: QuantizerSpec | None = None
    agc: bool = True

    symmetry: ClassVar[None] = None

    def __post_init__(self):
        if self.passband is not None and self.passband.domain != PASSBAND:
            raise ValueError("passband slot needs a passband-domain stage")
        if self.baseband is not None and self.baseband.domain != BASEBAND:
            raise ValueError("baseband slot needs a baseband-domain stage")
        if self.quantizer is not None and not self.agc:
            raise ValueError("a quantizer must be preceded by the AGC")

    @classmethod
    def identity(cls) -> "NonlinearChain":
        return cls(agc=False)

    @classmethod
    def from_db(cls, bits: int | None = None, p1db_pb_db: float | None = None,
                p1db_bb_db: float | None = None, quantizer: str = "uniform") -> "NonlinearChain":
        pb = None if p1db_pb_db is None else ThirdOrderSaturated(10 ** (p1db_pb_db / 10), PASSBAND)
        bb = None if p1db_bb_db is None else ThirdOrderSaturated(10 ** (p1db_bb_db / 10), BASEBAND)
        q = None
        if bits is not None:
            q = design_uniform_quantizer(bits) if quantizer == "uniform" else design_lloyd_max(bits)
        return cls(passband=pb, baseband=bb, quantizer=q, agc=True)

    @property
    def is_identity(self) -> bool:
        def transparent(stage):
            return stage is None or (isinstance(stage, ThirdOrderSaturated) and math.isinf(stage.p1db))
        return (transparent(self.passband) and transparent(self.baseband)
                and self.quantizer is None and not self.agc)

    @property
    def agc_rms(self) -> float:
        """Per-dimension rms of the pre-quantizer signal for unit-power Gaussian input."""
        return math.sqrt(_pre_agc_power(self.passband, self.baseband) / 2.0)

    def output_scale(self, input_power: float) -> float:
        """Factor relating ``apply_chain`` at ``input_power`` to the unit-power chain."""
        return 1.0 if self.agc else math.sqrt(input_power)

    def __call__(self, y):
        return apply_chain(y, self, 1.0)


def apply_chain(y, chain: NonlinearChain, input_power: float):
    """Run ``y`` (E|y|^2 = input_power) through the cascade; output is not de-normalized."""
    if not input_power > 0:
        raise ValueError("input_power must be positive")
    z = _float_array(y)
    if chain.passband is not None:
        z = chain.passband.scaled(input_power)(z)
    if chain.baseband is not None:
        z = chain.baseband.scaled(input_power / 2.0)(z)
    if chain.agc:
        z = z / (math.sqrt(input_power) * chain.agc_rms)
    if chain.quantizer is not None:
        z = apply_quantizer(z, chain.quantizer)
    return _restore(y, np.asarray(z))


# ----------------------------------------------------------------------------
# Diagnostics


def measure_p1db(stage: ThirdOrderSaturated, amplitude: float | None = None,
                 n_periods: int = 16, oversample: int = 64) -> float:
    """Fundamental gain compression (dB) of the real cubic driven by ``A cos(wt)``.

    The fundamental is read from a single DFT bin over an integer number of
    periods.  ``amplitude`` defaults to ``sqrt(p1db)``.
    """
    if not isinstance(stage, ThirdOrderSaturated):
        raise TypeError("measure_p1db needs a third-order stage")
    amp = math.sqrt(stage.p1db) if amplitude is None else float(amplitude)
    n = np.arange(n_periods * oversample)
    phase = 2.0 * np.pi * n / oversample
    out = _third_order_real(amp * np.cos(phase), stage.p1db)
    fundamental = 2.0 / n.size * np.abs(np.sum(out * np.exp(-1j * phase)))
    return float(20.0 * np.log10(amp / fundamental))
