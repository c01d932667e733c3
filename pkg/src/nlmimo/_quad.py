"""Gaussian expectations of piecewise-smooth functions by adaptive quadrature."""

from __future__ import annotations

import math

import numpy as np
from scipy import integrate

EPSREL = 1e-11


def _segments(points, upper=math.inf):
    pts = sorted({float(p) for p in points if 0.0 < p < upper and math.isfinite(p)})
    edges = [0.0, *pts, upper]
    return list(zip(edges[:-1], edges[1:]))


def rayleigh_expect(func, power: float = 1.0, radii=()) -> float:
    """E[func(|y|)] for circular complex Gaussian y with E|y|^2 = power.

    ``radii`` are envelope values where ``func`` changes branch; integration
    is split there so each piece is smooth.
    """
    def integrand(t):
        return func(math.sqrt(t)) * math.exp(-t / power) / power

    total = 0.0
    for lo, hi in _segments([r * r for r in radii]):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=EPSREL, limit=200)
        total += val
    return total


def gauss_expect_even(func, var: float = 1.0, points=()) -> float:
    """E[func(x)] for x ~ N(0, var) and an even ``func``; ``points`` are positive kinks."""
    norm = 1.0 / math.sqrt(2.0 * math.pi * var)

    def integrand(x):
        return func(x) * norm * math.exp(-x * x / (2.0 * var))

    total = 0.0
    for lo, hi in _segments(points):
        val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=EPSREL, limit=200)
        total += val
    return 2.0 * total


def as_float(x) -> float:
    return float(np.asarray(x).item()) if np.ndim(x) else float(x)
