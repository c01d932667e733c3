"""LMMSE reception, output SINR and QPSK mapping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

INV_SQRT2 = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class LmmseReceiver:
    W: np.ndarray
    noise_var: float

    def estimate(self, y):
        return self.W @ y


def _gram(H, noise_var):
    H = np.asarray(H, dtype=complex)
    return H.conj().T @ H + noise_var * np.eye(H.shape[1])


def lmmse_build(H, noise_var: float) -> LmmseReceiver:
    """``W = (H^H H + noise_var I)^{-1} H^H`` via a Cholesky solve of the K x K system."""
    if not noise_var > 0:
        raise ValueError("noise_var must be positive")
    H = np.asarray(H, dtype=complex)
    factor = linalg.cho_factor(_gram(H, noise_var), lower=True, check_finite=False)
    W = linalg.cho_solve(factor, H.conj().T, check_finite=False)
    return LmmseReceiver(W, float(noise_var))


def lmmse_sinr(H, noise_var: float, k: int) -> float:
    """``h_k^H (sum_{j != k} h_j h_j^H + noise_var I)^{-1} h_k``.

    Evaluated through the (K-1) x (K-1) Woodbury form, so no N x N matrix is
    formed.
    """
    if not noise_var > 0:
        raise ValueError("noise_var must be positive")
    H = np.asarray(H, dtype=complex)
    h = H[:, k]
    hh = float(np.vdot(h, h).real)
    if H.shape[1] == 1:
        return hh / noise_var
    others = np.delete(H, k, axis=1)
    t = others.conj().T @ h
    u = linalg.solve(_gram(others, noise_var), t, assume_a="pos")
    return float((hh - np.vdot(t, u).real) / noise_var)


def lmmse_sinr_all(H, noise_var: float) -> np.ndarray:
    """Output SINR of every user: ``1 / [(I + H^H H / noise_var)^{-1}]_kk - 1``."""
    if not noise_var > 0:
        raise ValueError("noise_var must be positive")
    H = np.asarray(H, dtype=complex)
    K = H.shape[1]
    G = H.conj().T @ H / noise_var + np.eye(K)
    factor = linalg.cho_factor(G, lower=True, check_finite=False)
    mmse = np.real(np.diag(linalg.cho_solve(factor, np.eye(K), check_finite=False)))
    return 1.0 / mmse - 1.0


def matched_filter_snr(H, noise_var: float) -> np.ndarray:
    H = np.asarray(H)
    return np.sum(np.abs(H) ** 2, axis=0) / noise_var


def efficiency(H, noise_var: float, k: int | None = None):
    """SINR / SNR of the LMMSE output (all users when ``k`` is None)."""
    if k is None:
        return lmmse_sinr_all(H, noise_var) / matched_filter_snr(H, noise_var)
    h = np.asarray(H)[:, k]
    return lmmse_sinr(H, noise_var, k) / (float(np.vdot(h, h).real) / noise_var)


def empirical_sinr(x, x_hat) -> np.ndarray:
    """Per-row signal-to-residual ratio after projecting ``x_hat`` on the sent ``x``."""
    x = np.atleast_2d(x)
    x_hat = np.atleast_2d(x_hat)
    ex = np.mean(np.abs(x) ** 2, axis=1)
    c = np.mean(x_hat * np.conj(x), axis=1) / ex
    resid = x_hat - c[:, None] * x
    return np.abs(c) ** 2 * ex / np.mean(np.abs(resid) ** 2, axis=1)


# QPSK, Gray mapped: bit pair (b0, b1) -> ((1 - 2 b0) + j (1 - 2 b1)) / sqrt(2), so 00 -> (1+j)/sqrt(2).


def random_bits(rng: np.random.Generator, shape) -> np.ndarray:
    return rng.integers(0, 2, size=shape, dtype=np.int8)


def qpsk_modulate(bits) -> np.ndarray:
    """Map the last axis of ``bits`` (even length) to QPSK symbols."""
    b = np.asarray(bits)
    if b.shape[-1] % 2:
        raise ValueError("need an even number of bits")
    i = 1.0 - 2.0 * b[..., 0::2]
    q = 1.0 - 2.0 * b[..., 1::2]
    return INV_SQRT2 * (i + 1j * q)


def qpsk_detect(estimates) -> np.ndarray:
    est = np.asarray(estimates)
    out = np.empty(est.shape[:-1] + (2 * est.shape[-1],), dtype=np.int8)
    out[..., 0::2] = est.real < 0
    out[..., 1::2] = est.imag < 0
    return out


def availability_quantile(values, availability: float = 0.95) -> float:
    """Smallest value that at least ``availability`` of the entries do not exceed."""
    v = np.sort(np.asarray(values, dtype=float).ravel(), kind="stable")
    if v.size == 0:
        raise ValueError("no values")
    idx = int(np.ceil(availability * v.size - 1e-9)) - 1
    return float(v[max(idx, 0)])
