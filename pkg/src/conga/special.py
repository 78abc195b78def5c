"""Gaussian density/tails and Hermite polynomials."""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erfc

__all__ = [
    "norm_pdf",
    "norm_sf",
    "norm_cdf",
    "hermite",
    "hermite_all",
    "hermite_physicist",
    "hermite_coefficients",
]

_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def norm_pdf(x):
    x = np.asarray(x, dtype=float)
    return _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def norm_sf(x):
    """Upper tail ``P(N(0,1) > x)`` via ``erfc``, accurate far into the right tail."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def norm_cdf(x):
    return norm_sf(-np.asarray(x, dtype=float))


def hermite_all(nmax: int, x) -> np.ndarray:
    """Stack ``[He_0(x), ..., He_nmax(x)]`` along a new leading axis."""
    if nmax < 0:
        raise ValueError("Hermite order must be non-negative")
    x = np.asarray(x, dtype=float)
    out = np.empty((nmax + 1,) + x.shape)
    out[0] = 1.0
    if nmax >= 1:
        out[1] = x
    for n in range(1, nmax):
        out[n + 1] = x * out[n] - n * out[n - 1]
    return out


def hermite(n: int, x):
    """Probabilists' Hermite polynomial ``He_n(x)`` by the three-term recurrence."""
    res = hermite_all(n, x)[n]
    return float(res) if np.ndim(res) == 0 else res


def hermite_physicist(n: int, x):
    """``H_n(x) = 2^{n/2} He_n(sqrt(2) x)``."""
    x = np.asarray(x, dtype=float)
    res = 2.0 ** (n / 2.0) * hermite_all(n, math.sqrt(2.0) * x)[n]
    return float(res) if np.ndim(res) == 0 else res


def hermite_coefficients(n: int) -> list[int]:
    """Integer coefficients of ``He_n`` in increasing powers (exact arithmetic)."""
    prev, cur = [1], [0, 1]
    if n == 0:
        return prev
    for m in range(1, n):
        nxt = [0] + cur  # x * He_m
        for i, c in enumerate(prev):
            nxt[i] -= m * c
        prev, cur = cur, nxt
    return cur
