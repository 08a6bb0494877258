"""Slow, independent reference implementations used to cross-check the fast paths.

Nothing here is on the hot path. Each function is written from the defining
sum rather than from the production code, so agreement is meaningful.
"""
from __future__ import annotations

import math

import numpy as np
from scipy import integrate, optimize


def delay_product_loop(x, d: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[0]
    out = np.zeros(n, dtype=np.complex128)
    for i in range(n - d):
        out[i] = x[i] * np.conj(x[i + d])
    return out


def ca_direct(x, delays) -> np.ndarray:
    """O(n^2) evaluation of (1/n) sum_i x[i] conj(x[i+d]) exp(-j2pi k (i + d/2) / n), signed k."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[0]
    out = np.zeros((n, len(delays)), dtype=np.complex128)
    for col, d in enumerate(delays):
        i = np.arange(n - d)
        prod = x[: n - d] * np.conj(x[d:])
        for kk in range(n):
            k = kk if kk <= n // 2 else kk - n
            # one explicit sum per (k, d), no transform
            out[kk, col] = np.sum(prod * np.exp(-2j * np.pi * k * (i + d / 2) / n)) / n
    return out


def ca_aliasing_sum(k: int, n: int, n_sym: int, d: int, sigma_a2: float = 1.0,
                    d_phi: float | None = None, terms: int = 1_000_000) -> complex:
    """Sampled-BPSK CA as the sum of continuous-time CA aliases, |l| <= ``terms``."""
    if d_phi is None:
        d_phi = (n_sym + 1) / 2
    if (k * n_sym) % n:
        return 0j
    span = n_sym - abs(d)
    a = k / n
    l = np.arange(-terms, terms + 1, dtype=float)
    alias = np.exp(1j * np.pi * l * d) * np.exp(2j * np.pi * l * d_phi) * np.sinc((a + l) * span)
    # fold +l and -l together before summing
    total = alias[terms] + np.sum(alias[terms + 1:] + alias[terms - 1::-1])
    return complex(sigma_a2 * span / n_sym * np.exp(2j * np.pi * a * d_phi) * total)


def gather_loop(p: np.ndarray, indices) -> np.ndarray:
    out = np.zeros((len(indices), p.shape[1]), dtype=p.dtype)
    for row, idx in enumerate(indices):
        for col in range(p.shape[1]):
            out[row, col] = p[idx, col]
    return out


def smoothed_spectrum_loop(c: np.ndarray, k: int, m: int, n_: int, conjugated: bool, w) -> complex:
    n = c.shape[0]
    length = len(w)
    half = (length - 1) // 2
    acc = 0j
    for pos, s in enumerate(range(-half, half + 1)):
        if conjugated:
            acc += w[pos] * np.conj(c[(k + s) % n, n_]) * c[(k + s) % n, m]
        else:
            acc += w[pos] * c[(k - s) % n, n_] * c[(k + s) % n, m]
    return acc / (n * length)


def chi2_tail_quadrature(t: float, dof: int) -> float:
    """P(chi2_dof > t) by integrating the density over [0, t]."""
    if t <= 0:
        return 1.0
    half = dof / 2.0
    log_norm = half * math.log(2.0) + math.lgamma(half)

    def pdf(x):
        if x <= 0:
            return 0.0 if half > 1 else (math.inf if half < 1 else 0.5)
        return math.exp((half - 1) * math.log(x) - x / 2 - log_norm)

    head, _ = integrate.quad(pdf, 0.0, t, limit=200, epsabs=1e-14, epsrel=1e-12)
    return 1.0 - head


def chi2_quantile_quadrature(pfa: float, dof: int) -> float:
    hi = 2.0 * dof + 10.0
    while chi2_tail_quadrature(hi, dof) > pfa:
        hi *= 2
    return optimize.brentq(lambda t: chi2_tail_quadrature(t, dof) - pfa, 1e-12, hi, xtol=1e-12)
