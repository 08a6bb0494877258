"""Sampled BPSK test signals with rectangular pulses, plus AWGN.

Symbols are drawn i.i.d. from {+1, -1} and held for ``n_sym`` samples. The
sampling instants sit half a sample period inside each pulse, which puts
sample ``i`` on symbol ``i // n_sym`` and corresponds to a pulse timing phase
of ``(n_sym + 1) / 2`` samples.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np


class ConfigurationError(ValueError):
    """Raised for parameter combinations the pipeline cannot run with."""


class Modulation(str, Enum):
    BPSK = "BPSK"


@dataclass(frozen=True)
class SignalModel:
    n_sym: int
    d_phi: float | None = None
    sigma_a2: float = 1.0
    modulation: Modulation = Modulation.BPSK

    def __post_init__(self):
        if int(self.n_sym) != self.n_sym or self.n_sym < 1:
            raise ConfigurationError(f"n_sym must be a positive integer, got {self.n_sym}")
        if not self.sigma_a2 > 0:
            raise ConfigurationError("sigma_a2 must be positive")
        if self.d_phi is None:
            object.__setattr__(self, "d_phi", (self.n_sym + 1) / 2)

    @property
    def fundamental(self) -> float:
        """Fundamental cycle frequency in cycles per sample."""
        return 1.0 / self.n_sym


@dataclass(frozen=True)
class SampleRecord:
    samples: np.ndarray
    sample_period: float = 1.0
    seed: int | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.samples, dtype=np.complex128)
        if arr.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def n(self) -> int:
        return self.samples.shape[0]

    def power(self) -> float:
        return float(np.mean(np.abs(self.samples) ** 2)) if self.n else 0.0


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _seed_tag(seed):
    return seed if isinstance(seed, (int, np.integer)) else None


def draw_symbols(count: int, seed=None) -> np.ndarray:
    rng = _rng(seed)
    return 2.0 * rng.integers(0, 2, size=count) - 1.0


def modulate(symbols, n_sym: int, amplitude: float = 1.0) -> np.ndarray:
    """Rectangular-pulse sampling of a symbol sequence: each symbol held ``n_sym`` samples."""
    symbols = np.asarray(symbols)
    return (amplitude * np.repeat(symbols, n_sym)).astype(np.complex128)


def generate_signal(model: SignalModel, n: int, seed=None, symbols=None) -> SampleRecord:
    """Clean BPSK block of ``n`` samples.

    ``symbols`` overrides the random draw (used for deterministic fixtures).
    """
    if n < model.n_sym:
        raise ConfigurationError(f"n={n} is shorter than one symbol ({model.n_sym} samples)")
    if n % model.n_sym:
        raise ConfigurationError(
            f"n={n} is not a multiple of n_sym={model.n_sym}; refusing to truncate a symbol"
        )
    count = n // model.n_sym
    if symbols is None:
        symbols = draw_symbols(count, seed)
    else:
        symbols = np.asarray(symbols, dtype=float)
        if symbols.shape != (count,):
            raise ConfigurationError(f"expected {count} symbols, got {symbols.shape}")
    amplitude = math.sqrt(model.sigma_a2)
    return SampleRecord(modulate(symbols, model.n_sym, amplitude), seed=_seed_tag(seed),
                        meta={"n_sym": model.n_sym, "d_phi": model.d_phi})


def complex_noise(n: int, power: float, seed=None) -> np.ndarray:
    """Circularly symmetric complex Gaussian noise, ``power/2`` per real dimension."""
    rng = _rng(seed)
    scale = math.sqrt(power / 2.0)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def add_awgn(record: SampleRecord, snr_db: float, seed=None) -> SampleRecord:
    """Return a copy of ``record`` with noise at ``snr_db`` relative to its empirical power.

    ``snr_db = inf`` disables the noise.
    """
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ConfigurationError(f"snr_db must be finite or +inf, got {snr_db}")
    if snr_db == math.inf:
        return replace(record, samples=record.samples.copy())
    noise_power = record.power() * 10.0 ** (-snr_db / 10.0)
    noisy = record.samples + complex_noise(record.n, noise_power, seed)
    return replace(record, samples=noisy, meta={**record.meta, "snr_db": snr_db,
                                                  "noise_power": noise_power})


def generate_h0(n: int, noise_power: float = 1.0, seed=None) -> SampleRecord:
    if n <= 0:
        raise ConfigurationError("n must be positive")
    if not noise_power > 0:
        raise ConfigurationError("noise_power must be positive")
    return SampleRecord(complex_noise(n, noise_power, seed), seed=_seed_tag(seed),
                        meta={"noise_power": noise_power})


def generate_h1(model: SignalModel, n: int, snr_db: float, seed=None) -> SampleRecord:
    """Signal plus noise with symbols and noise drawn from one stream."""
    rng = _rng(seed)
    clean = generate_signal(model, n, rng)
    noisy = add_awgn(clean, snr_db, rng)
    return replace(noisy, seed=_seed_tag(seed))
