"""Small shared helpers: dB conversions, counter-based RNG streams, Q-function."""

from __future__ import annotations

import zlib

import numpy as np
from scipy import stats


def db2lin(x_db):
    out = np.power(10.0, np.asarray(x_db, dtype=float) / 10.0)
    return float(out) if out.ndim == 0 else out


def lin2db(x):
    with np.errstate(divide="ignore"):
        out = 10.0 * np.log10(np.asarray(x, dtype=float))
    return float(out) if out.ndim == 0 else out


def _tag(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode())
    return int(part)


def stream(seed: int, *key) -> np.random.Generator:
    """Independent Philox generator for the stream identified by ``(seed, *key)``.

    Streams depend only on the key, never on the order in which they are
    requested, so work split across processes reproduces single-process output.
    """
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *(_tag(k) for k in key)])
    return np.random.Generator(np.random.Philox(ss))


def complex_normal(rng: np.random.Generator, size, power: float = 1.0) -> np.ndarray:
    """Circular complex Gaussian samples with E|y|^2 = power."""
    scale = np.sqrt(power / 2.0)
    return scale * (rng.standard_normal(size) + 1j * rng.standard_normal(size))


def qfunc(x):
    return stats.norm.sf(x)


def qpsk_ber(snr):
    """Gray-mapped QPSK bit error rate at Es/N0 = snr (linear)."""
    return stats.norm.sf(np.sqrt(snr))


def qpsk_required_snr(ber: float) -> float:
    """Es/N0 (linear) at which Gray QPSK reaches ``ber`` on AWGN."""
    return float(stats.norm.isf(ber) ** 2)
