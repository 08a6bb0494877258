"""Time-domain test (TDT) for cyclostationarity and its sparse variant.

The test vector is the real/imaginary concatenation of one CA row across the
delays. Its covariance comes from frequency-smoothed cyclic periodograms and
the GLR statistic ``T = n * r Sigma^-1 r^T`` is compared against a central
chi-squared threshold with ``2 * n_delays`` degrees of freedom.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np
from scipy import optimize, special

from .caf import CycleAutocorrelationMatrix, DelayProductMatrix, SensingConfig, ca_matrix_from_products
from .recovery import NoCycleFrequencyError, RecoveryState, primary_cycle_frequency
from .signals import ConfigurationError

COND_LIMIT = 1e12
LOADING = 1e-8


class Verdict(str, Enum):
    H0 = "H0"
    H1 = "H1"


@dataclass(frozen=True)
class SpectralWindow:
    """Odd-length Kaiser window, scaled so its weights sum to its length."""

    length: int = 201
    beta: float = 10.0

    def __post_init__(self):
        if self.length < 1 or self.length % 2 == 0:
            raise ConfigurationError(f"window length must be odd and positive, got {self.length}")

    @property
    def weights(self) -> np.ndarray:
        w = np.kaiser(self.length, self.beta)
        w = 0.5 * (w + w[::-1])
        return w * (self.length / w.sum())

    def fitted(self, n: int) -> "SpectralWindow":
        """Same shape, shortened to the longest odd length below ``n`` if needed."""
        if self.length < n:
            return self
        length = n - 1 if n % 2 == 0 else n - 2
        if length < 1:
            raise ConfigurationError(f"a CA of size {n} cannot hold a smoothing window")
        return SpectralWindow(length, self.beta)


@dataclass(frozen=True)
class CovarianceEstimate:
    matrix: np.ndarray
    window_length: int
    window_beta: float
    source_size: int


@dataclass
class TestResult:
    statistic: float
    k_test: int | None
    dof: int
    threshold: float | None = None
    pfa: float | None = None
    verdict: Verdict | None = None
    regularized: bool = False

    __test__ = False  # not a pytest class

    def to_dict(self) -> dict:
        out = asdict(self)
        out["verdict"] = None if self.verdict is None else self.verdict.value
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _entries(c) -> np.ndarray:
    return c.entries if isinstance(c, CycleAutocorrelationMatrix) else np.asarray(c)


def _window_rows(n: int, k: int, window: SpectralWindow):
    if window.length >= n:
        raise ConfigurationError(f"window length {window.length} must be below the CA size {n}")
    half = (window.length - 1) // 2
    s = np.arange(-half, half + 1)
    return (k - s) % n, (k + s) % n, window.weights


def smoothed_cyclic_spectrum(c, k: int, m: int, n_: int, conjugated: bool,
                             window: SpectralWindow) -> complex:
    """Frequency-smoothed cyclic periodogram of delay columns ``m`` and ``n_`` around row ``k``.

    unconjugated: (1/(N L)) sum_s W(s) C[k-s, n_] C[k+s, m]
    conjugated:   (1/(N L)) sum_s W(s) conj(C[k+s, n_]) C[k+s, m]
    """
    c = _entries(c)
    n = c.shape[0]
    minus, plus, w = _window_rows(n, k, window)
    left = np.conj(c[plus, n_]) if conjugated else c[minus, n_]
    return complex(np.sum(w * left * c[plus, m]) / (n * window.length))


def _spectra(c: np.ndarray, k: int, window: SpectralWindow):
    """All (m, n) entries of the unconjugated and conjugated smoothed spectra."""
    n = c.shape[0]
    minus, plus, w = _window_rows(n, k, window)
    cp = c[plus] * w[:, None]
    scale = n * window.length
    q = cp.T @ c[minus] / scale
    q_conj = cp.T @ np.conj(c[plus]) / scale
    return q, q_conj


def estimate_covariance(c, k_test: int, window: SpectralWindow) -> CovarianceEstimate:
    """Covariance of ``sqrt(n) * r(k_test)`` from the smoothed cyclic spectra.

    The periodograms work on the unnormalized DFT of the delay products, i.e.
    ``n * C``; the CA itself carries the 1/n.
    """
    c = _entries(c)
    n = c.shape[0]
    q, q_conj = _spectra(n * c, k_test, window)
    top = np.hstack([np.real(q + q_conj) / 2, np.imag(q - q_conj) / 2])
    bottom = np.hstack([np.imag(q + q_conj) / 2, np.real(q_conj - q) / 2])
    sigma = np.vstack([top, bottom])
    sigma = 0.5 * (sigma + sigma.T)
    return CovarianceEstimate(sigma, window.length, window.beta, n)


def test_vector(c, k: int) -> np.ndarray:
    row = _entries(c)[k % _entries(c).shape[0]]
    return np.concatenate([row.real, row.imag])


test_vector.__test__ = False


def quadratic_statistic(r: np.ndarray, sigma: np.ndarray, n: int) -> tuple[float, bool]:
    """``n * r sigma^-1 r^T`` with diagonal loading when sigma is ill conditioned."""
    dim = sigma.shape[0]
    trace = float(np.trace(sigma))
    if trace <= 0.0:
        return (0.0 if not np.any(r) else math.inf), True
    regularized = False
    if np.linalg.cond(sigma) > COND_LIMIT:
        sigma = sigma + LOADING * trace / dim * np.eye(dim)
        regularized = True
    value = float(n * r @ np.linalg.solve(sigma, r))
    return max(value, 0.0), regularized


def tdt_statistic(c, k_test: int, window: SpectralWindow) -> TestResult:
    """Classical TDT on a full CA matrix at a known cycle frequency."""
    entries = _entries(c)
    n, n_d = entries.shape
    cov = estimate_covariance(entries, k_test, window)
    t, reg = quadratic_statistic(test_vector(entries, k_test), cov.matrix, n)
    return TestResult(t, int(k_test), 2 * n_d, regularized=reg)


def consecutive_frequency(k_test: int, cfg: SensingConfig) -> int:
    """Row of the consecutive-block CA matching ``k_test`` of the size-n CA (never DC)."""
    k_c = int(math.ceil(round(cfg.c_r * cfg.m_avail / cfg.n * k_test, 9)))
    return max(k_c, 1)


def sparse_tdt_statistic(p_u, state: RecoveryState | None, cfg: SensingConfig,
                         window: SpectralWindow, k_test: int | None = None,
                         estimate=None) -> TestResult:
    """TDT on a sparse CA estimate, with the covariance taken from the consecutive block.

    ``p_u`` are the undersampled delay products in mask order (the consecutive
    prefix first). ``k_test`` defaults to the recovery's primary cycle
    frequency; a support without one yields statistic 0 and verdict H0.
    """
    entries = p_u.entries if isinstance(p_u, DelayProductMatrix) else np.asarray(p_u)
    n_d = entries.shape[1]
    n_c = cfg.consecutive_count
    if n_c <= window.length:
        raise ConfigurationError(
            f"consecutive block of {n_c} rows cannot hold a window of length {window.length}")
    if estimate is None:
        estimate = state.estimate
    if k_test is None:
        try:
            k_test = primary_cycle_frequency(state)
        except NoCycleFrequencyError:
            return TestResult(0.0, None, 2 * n_d, verdict=Verdict.H0)
    block = ca_matrix_from_products(DelayProductMatrix(entries[:n_c], cfg.delays))
    k_c = consecutive_frequency(k_test, cfg)
    cov = estimate_covariance(block, k_c, window)
    sigma = cov.matrix / math.sqrt(cfg.c_r * cfg.m_avail / cfg.n)
    t, reg = quadratic_statistic(test_vector(estimate, k_test), sigma, cfg.n)
    return TestResult(t, int(k_test), 2 * n_d, regularized=reg)


def chi2_threshold(pfa: float, dof: int) -> float:
    """t with P(chi2_dof > t) = pfa, by inverting the regularized upper incomplete gamma."""
    if not 0.0 < pfa < 1.0:
        raise ValueError(f"pfa must lie in (0, 1), got {pfa}")
    if dof < 1:
        raise ValueError("dof must be at least 1")
    a = dof / 2.0

    def excess(t):
        return special.gammaincc(a, t / 2.0) - pfa

    hi = max(2.0 * dof, 1.0)
    while excess(hi) > 0:
        hi *= 2.0
    return optimize.brentq(excess, 0.0, hi, xtol=1e-300, rtol=1e-12, maxiter=500)


def chi2_tail(t: float, dof: int) -> float:
    """P(chi2_dof > t)."""
    if t == math.inf:
        return 0.0
    return float(special.gammaincc(dof / 2.0, max(t, 0.0) / 2.0))


def decide(result: TestResult, pfa: float) -> TestResult:
    threshold = chi2_threshold(pfa, result.dof)
    verdict = Verdict.H1 if result.statistic > threshold else Verdict.H0
    return TestResult(result.statistic, result.k_test, result.dof, threshold, pfa, verdict,
                      result.regularized)
