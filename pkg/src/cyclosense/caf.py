"""Delay products, the classical cyclic autocorrelation (CA) estimator and the
closed-form asymptotic CA of sampled rectangular-pulse BPSK.

Row ``k`` of a CA matrix is discrete cycle frequency ``k``; rows above ``n/2``
hold the negative frequencies ``k - n``. Every estimate carries the half-delay
phase ``exp(-j*pi*k*d/n)`` (with ``k`` wrapped to the signed range) so that it
lines up with the symmetric CA definition.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .signals import ConfigurationError, SampleRecord, SignalModel


@dataclass(frozen=True)
class SensingConfig:
    """CA size ``n``, number of known delay-product rows ``m_avail``, delays and
    consecutive sample ratio ``c_r``."""

    n: int
    m_avail: int
    delays: tuple = (1, 2, 3, 4)
    c_r: float = 0.15

    def __post_init__(self):
        object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))
        if self.n < 2:
            raise ConfigurationError("n must be at least 2")
        if not 0 < self.m_avail <= self.n:
            raise ConfigurationError(f"m_avail must lie in (0, n], got {self.m_avail} for n={self.n}")
        if not self.delays:
            raise ConfigurationError("at least one delay is required")
        if len(set(self.delays)) != len(self.delays):
            raise ConfigurationError("delays must be distinct")
        if any(d <= 0 or d >= self.n for d in self.delays):
            raise ConfigurationError("delays must be positive and below n")
        if not 0.01 <= self.c_r <= 0.5:
            raise ConfigurationError(f"c_r must lie in [0.01, 0.5], got {self.c_r}")

    @property
    def consecutive_count(self) -> int:
        return consecutive_count(self.c_r, self.m_avail)

    @property
    def n_delays(self) -> int:
        return len(self.delays)


def consecutive_count(c_r: float, m: int) -> int:
    # the rounding guard keeps 0.15 * 1000 at 150 instead of 151
    return int(math.ceil(round(c_r * m, 9)))


@dataclass(frozen=True)
class DelayProductMatrix:
    entries: np.ndarray
    delays: tuple

    def __post_init__(self):
        object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.ndim != 2 or entries.shape[1] != len(self.delays):
            raise ValueError("entries must be rows x len(delays)")
        object.__setattr__(self, "entries", entries)

    @property
    def rows(self) -> int:
        return self.entries.shape[0]

    def scaled(self, gamma: float) -> "DelayProductMatrix":
        return DelayProductMatrix(gamma * self.entries, self.delays)


@dataclass(frozen=True)
class CycleAutocorrelationMatrix:
    entries: np.ndarray
    delays: tuple

    def __post_init__(self):
        object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))
        entries = np.asarray(self.entries, dtype=np.complex128)
        if entries.ndim != 2 or entries.shape[1] != len(self.delays):
            raise ValueError("entries must be n x len(delays)")
        object.__setattr__(self, "entries", entries)

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def row(self, k: int) -> np.ndarray:
        return self.entries[k % self.n]


def _samples(x) -> np.ndarray:
    if isinstance(x, SampleRecord):
        return x.samples
    return np.asarray(x, dtype=np.complex128)


def signed_frequencies(n: int) -> np.ndarray:
    """Row index -> signed discrete cycle frequency (k for k <= n/2, else k - n)."""
    k = np.arange(n)
    return np.where(k <= n // 2, k, k - n)


def half_delay_phase(n: int, delays: Sequence[int]) -> np.ndarray:
    """n x len(delays) matrix of exp(-j*pi*k*d/n) with signed k."""
    k = signed_frequencies(n)[:, None]
    d = np.asarray(delays, dtype=float)[None, :]
    return np.exp(-1j * np.pi * k * d / n)


def delay_product(x, d: int) -> np.ndarray:
    """x[i] * conj(x[i + d]), zero-padded over the last ``d`` entries."""
    x = _samples(x)
    n = x.shape[0]
    if not 0 <= d < n:
        raise ValueError(f"delay {d} outside [0, {n})")
    out = np.zeros(n, dtype=np.complex128)
    out[: n - d] = x[: n - d] * np.conj(x[d:])
    return out


def delay_product_matrix(x, delays: Sequence[int]) -> DelayProductMatrix:
    if len(delays) == 0:
        raise ConfigurationError("empty delay list")
    cols = [delay_product(x, d) for d in delays]
    return DelayProductMatrix(np.stack(cols, axis=1), tuple(delays))


def ca_matrix_from_products(p: DelayProductMatrix, n: int | None = None) -> CycleAutocorrelationMatrix:
    """(1/n) * DFT of each delay-product column, with the half-delay phase applied per row."""
    rows = p.rows
    if n is not None and rows != n:
        raise ValueError(f"delay-product matrix has {rows} rows, expected {n}")
    spectrum = np.fft.fft(p.entries, axis=0) / rows
    return CycleAutocorrelationMatrix(spectrum * half_delay_phase(rows, p.delays), p.delays)


def classical_ca(x, delays: Sequence[int], n: int | None = None) -> CycleAutocorrelationMatrix:
    x = _samples(x)
    if n is not None and n != x.shape[0]:
        raise ValueError(f"signal has {x.shape[0]} samples, expected {n}")
    if len(delays) == 0:
        raise ConfigurationError("empty delay list")
    return ca_matrix_from_products(delay_product_matrix(x, delays))


def _closed_form(k_signed, n: int, n_sym: float, d: int, sigma_a2: float, d_phi: float):
    """Asymptotic CA at harmonic rows; caller is responsible for the zero branch."""
    k_signed = np.asarray(k_signed, dtype=float)
    span = n_sym - abs(d)
    f = k_signed / n
    out = np.empty(k_signed.shape, dtype=np.complex128)
    dc = k_signed == 0
    out[dc] = sigma_a2 * span / n_sym
    f_ = f[~dc]
    out[~dc] = (sigma_a2 / n_sym) * np.sin(np.pi * f_ * span) / np.sin(np.pi * f_)
    return out * np.exp(2j * np.pi * f * d_phi)


def _check_asymptotic_args(d: int, model: SignalModel, n: int):
    if abs(d) > model.n_sym:
        raise ValueError(f"|d|={abs(d)} exceeds n_sym={model.n_sym}; closed form not valid")
    if n % model.n_sym:
        raise ConfigurationError(f"n={n} is not a multiple of n_sym={model.n_sym}")


def asymptotic_ca(k: int, d: int, model: SignalModel, n: int) -> complex:
    """Asymptotic CA of sampled rectangular-pulse BPSK at signed frequency ``k`` and delay ``d``.

    Nonzero only at ``k = m * n / n_sym``; the DC value is the continuous limit
    ``sigma_a2 * (n_sym - |d|) / n_sym``.
    """
    _check_asymptotic_args(d, model, n)
    if (k * model.n_sym) % n:
        return 0j
    return complex(_closed_form(np.array([k]), n, model.n_sym, d, model.sigma_a2, model.d_phi)[0])


def asymptotic_ca_vector(model: SignalModel, n: int, d: int) -> np.ndarray:
    """Length-n vector of :func:`asymptotic_ca` in DFT row order."""
    _check_asymptotic_args(d, model, n)
    k = signed_frequencies(n)
    out = np.zeros(n, dtype=np.complex128)
    hit = (k * model.n_sym) % n == 0
    out[hit] = _closed_form(k[hit], n, model.n_sym, d, model.sigma_a2, model.d_phi)
    return out


def asymptotic_ca_matrix(model: SignalModel, n: int, delays: Sequence[int]) -> np.ndarray:
    return np.stack([asymptotic_ca_vector(model, n, d) for d in delays], axis=1)


def harmonic_rows(n: int, n_sym: int, include_dc: bool = False) -> np.ndarray:
    """Row indices of the cycle frequencies m * n / n_sym (m != 0 unless include_dc)."""
    if n % n_sym:
        raise ConfigurationError(f"n={n} is not a multiple of n_sym={n_sym}")
    step = n // n_sym
    rows = np.arange(0, n, step)
    return rows if include_dc else rows[1:]


def harmonic_pattern(n: int, step: int, d: int, sigma_a2: float = 1.0) -> np.ndarray:
    """|asymptotic CA| for a cycle-frequency candidate ``step`` (period n/step samples).

    The period may be fractional here; rows are the signed multiples of ``step``
    inside (-n/2, n/2]. A delay longer than the period gives an all-zero pattern.
    """
    n_sym = n / step
    if abs(d) > n_sym:
        return np.zeros(n)
    k = signed_frequencies(n)
    out = np.zeros(n)
    hit = k % step == 0
    out[hit] = np.abs(_closed_form(k[hit], n, n_sym, d, sigma_a2, 0.0))
    return out


def verify_series_identity(k: int, n: int, terms: int = 100_000) -> float:
    """|sum_{l=-L..L} (-1)^l / (k/n + l) - pi / sin(pi k / n)| for L = ``terms``."""
    if terms < 1000:
        raise ValueError("terms must be at least 1000")
    a = k / n
    if a == int(a):
        raise ValueError("k/n is an integer; the series has a pole")
    l = np.arange(1, terms + 1, dtype=float)
    sign = np.where(l % 2 == 0, 1.0, -1.0)
    # l and -l paired: (-1)^l * 2a / (a^2 - l^2)
    pairs = sign * 2.0 * a / (a * a - l * l)
    partial = 1.0 / a + math.fsum(pairs[::-1])
    return abs(partial - math.pi / math.sin(math.pi * a))
