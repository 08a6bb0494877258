"""Greedy recovery of a sparse CA matrix from undersampled delay products.

The known rows of the delay-product matrix are ``P_u = A C`` with the
measurement operator ``A = n * S * F^-1`` (times the inverse half-delay phase
per column). Column ``k`` of ``A`` restricted to the mask is
``exp(j*2*pi*idx*k/n)``, so correlations against all atoms are one FFT of the
zero-filled residual.

Three solvers share the least-squares refit: per-delay OMP (baseline),
simultaneous OMP (joint support over delays) and the dictionary assisted
estimator, which scores whole harmonic/mirror patterns at once.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import sparse

from .caf import (
    CycleAutocorrelationMatrix,
    DelayProductMatrix,
    SensingConfig,
    _closed_form,
    half_delay_phase,
)
from .signals import ConfigurationError


class NoCycleFrequencyError(RuntimeError):
    """The recovered support holds nothing but DC."""


@dataclass(frozen=True)
class SamplingMask:
    indices: np.ndarray
    consecutive_count: int
    n: int
    seed: int | None = None

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.intp)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def m(self) -> int:
        return self.indices.shape[0]


def build_mask(cfg: SensingConfig, seed=None) -> SamplingMask:
    """First ``ceil(c_r * m)`` rows consecutively, the rest uniformly at random (sorted)."""
    n, m = cfg.n, cfg.m_avail
    if m > n:
        raise ConfigurationError(f"m_avail={m} exceeds n={n}")
    head = cfg.consecutive_count
    if head > m:
        raise ConfigurationError("consecutive block longer than m_avail")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    tail = np.sort(rng.choice(np.arange(head, n), size=m - head, replace=False))
    indices = np.concatenate([np.arange(head), tail])
    tag = seed if isinstance(seed, (int, np.integer)) else None
    return SamplingMask(indices, head, n, tag)


def undersample(p: DelayProductMatrix, mask: SamplingMask) -> DelayProductMatrix:
    if mask.m and (mask.indices.max() >= p.rows or mask.indices.min() < 0):
        raise ValueError(f"mask index out of range for {p.rows} rows")
    return DelayProductMatrix(p.entries[mask.indices], p.delays)


class MeasurementOperator:
    """``A = n * S * F^-1`` with the CA half-delay phase folded in per delay column."""

    def __init__(self, n: int, mask: SamplingMask | Sequence[int], delays: Sequence[int]):
        self.n = int(n)
        self.indices = np.asarray(mask.indices if isinstance(mask, SamplingMask) else mask,
                                  dtype=np.intp)
        self.delays = tuple(int(d) for d in delays)
        self.phase = half_delay_phase(self.n, self.delays)

    @property
    def m(self) -> int:
        return self.indices.shape[0]

    def atoms(self, support: Sequence[int]) -> np.ndarray:
        """Phase-free atoms for the given rows, shape (m, len(support))."""
        k = np.asarray(support, dtype=float)
        return np.exp(2j * np.pi * np.outer(self.indices, k) / self.n)

    def dense(self, delay_index: int | None = None) -> np.ndarray:
        """Full m x n matrix; with ``delay_index`` the phase of that delay is included."""
        a = self.atoms(np.arange(self.n))
        if delay_index is None:
            return a
        return a * np.conj(self.phase[:, delay_index])[None, :]

    def apply(self, ca) -> np.ndarray:
        """Delay products at the masked rows implied by a CA matrix (n x n_delays)."""
        c = ca.entries if isinstance(ca, CycleAutocorrelationMatrix) else np.asarray(ca)
        full = self.n * np.fft.ifft(c * np.conj(self.phase), axis=0)
        return full[self.indices]

    def correlate(self, residual: np.ndarray) -> np.ndarray:
        """``A_d^H r`` for every delay column; shape (n, n_delays)."""
        residual = np.asarray(residual).reshape(self.m, -1)
        filled = np.zeros((self.n, residual.shape[1]), dtype=np.complex128)
        filled[self.indices] = residual
        return np.fft.fft(filled, axis=0) * self.phase[:, : residual.shape[1]]

    def solve(self, p_u: np.ndarray, support: Sequence[int], columns=None):
        """Least squares on ``support`` for the given delay columns.

        Returns (coefficients in CA convention, residual, rank deficient flag).
        """
        cols = range(p_u.shape[1]) if columns is None else columns
        cols = list(cols)
        rhs = p_u[:, cols]
        a = self.atoms(support)
        z, _, rank, _ = np.linalg.lstsq(a, rhs, rcond=None)
        residual = rhs - a @ z
        coef = z * self.phase[np.asarray(support, dtype=np.intp)][:, cols]
        return coef, residual, rank < len(support)


@dataclass
class RecoveryState:
    support: list
    estimate: CycleAutocorrelationMatrix
    residual_norms: np.ndarray
    iterations_run: int
    residual_history: list = field(default_factory=list)
    rank_deficient: bool = False
    per_delay_support: list | None = None
    method: str = ""

    def to_dict(self) -> dict:
        out = {
            "method": self.method,
            "support": [int(k) for k in self.support],
            "residual_norms": [float(r) for r in self.residual_norms],
            "iterations_run": int(self.iterations_run),
            "rank_deficient": bool(self.rank_deficient),
        }
        if self.per_delay_support is not None:
            out["per_delay_support"] = [[int(k) for k in s] for s in self.per_delay_support]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _as_array(p_u) -> tuple[np.ndarray, tuple]:
    if isinstance(p_u, DelayProductMatrix):
        return p_u.entries, p_u.delays
    arr = np.asarray(p_u, dtype=np.complex128)
    return (arr if arr.ndim == 2 else arr[:, None]), ()


def _check_inputs(p: np.ndarray, op: MeasurementOperator, n_iter: int):
    if n_iter < 1:
        raise ValueError("n_iter must be at least 1")
    if p.shape[0] != op.m:
        raise ValueError(f"p_u has {p.shape[0]} rows but the mask selects {op.m}")
    if p.shape[1] != len(op.delays):
        raise ValueError("p_u column count differs from the operator's delays")


def _state(op, support, coef, rows_per_col, residual, history, rank_def, n_iter, **kw):
    est = np.zeros((op.n, len(op.delays)), dtype=np.complex128)
    if rows_per_col is None:
        if support:
            est[np.asarray(support)] = coef
    else:
        for col, (rows, c) in enumerate(zip(rows_per_col, coef)):
            if rows:
                est[np.asarray(rows), col] = c
    norms = np.linalg.norm(residual, axis=0)
    return RecoveryState(list(support), CycleAutocorrelationMatrix(est, op.delays), norms,
                         n_iter, history, rank_def, **kw)


def somp_estimate(p_u, op: MeasurementOperator, n_iter: int) -> RecoveryState:
    """Simultaneous OMP: one support for all delays, atoms ranked by summed |correlation|."""
    p, _ = _as_array(p_u)
    _check_inputs(p, op, n_iter)
    support: list[int] = []
    residual = p.copy()
    coef = np.zeros((0, p.shape[1]), dtype=np.complex128)
    history = [np.linalg.norm(residual, axis=0)]
    rank_def = False
    for _ in range(n_iter):
        score = np.abs(op.correlate(residual)).sum(axis=1)
        score[support] = -np.inf
        support.append(int(np.argmax(score)))
        coef, residual, deficient = op.solve(p, support)
        rank_def |= deficient
        history.append(np.linalg.norm(residual, axis=0))
    return _state(op, support, coef, None, residual, history, rank_def, n_iter, method="sober")


def omp_estimate(p_u, op: MeasurementOperator, n_iter: int) -> RecoveryState:
    """Plain OMP run separately on every delay column.

    The merged support lists indices by iteration; within one iteration the
    delay with the stronger selection score goes first.
    """
    p, _ = _as_array(p_u)
    _check_inputs(p, op, n_iter)
    n_d = p.shape[1]
    supports: list[list[int]] = [[] for _ in range(n_d)]
    residual = p.copy()
    coefs = [np.zeros(0, dtype=np.complex128)] * n_d
    history = [np.linalg.norm(residual, axis=0)]
    merged: list[int] = []
    rank_def = False
    for _ in range(n_iter):
        corr = np.abs(op.correlate(residual))
        picks = []
        for col in range(n_d):
            score = corr[:, col].copy()
            score[supports[col]] = -np.inf
            j = int(np.argmax(score))
            supports[col].append(j)
            picks.append((-score[j], col, j))
            c, r, deficient = op.solve(p, supports[col], columns=[col])
            coefs[col] = c[:, 0]
            residual[:, col] = r[:, 0]
            rank_def |= deficient
        for _, _, j in sorted(picks):
            if j not in merged:
                merged.append(j)
        history.append(np.linalg.norm(residual, axis=0))
    return _state(op, merged, coefs, supports, residual, history, rank_def, n_iter,
                  per_delay_support=[list(s) for s in supports], method="omp")


def oracle_estimate(p_u, op: MeasurementOperator, support: Sequence[int]) -> RecoveryState:
    """Least squares on a known support (the oracle variants of the sparse methods)."""
    p, _ = _as_array(p_u)
    support = [int(k) for k in support]
    coef, residual, deficient = op.solve(p, support)
    return _state(op, support, coef, None, residual, [np.linalg.norm(residual, axis=0)],
                  deficient, 0, method="oracle")


class DictionaryKind(str, Enum):
    SYMMETRY = "symmetry"
    ASYMPTOTIC = "asymptotic"


@dataclass(frozen=True)
class StructureDictionary:
    """Nonnegative n x n/2 pattern matrix; column ``j - 1`` describes candidate frequency ``j``."""

    entries: sparse.csc_array
    kind: DictionaryKind
    delay: int | None = None

    @property
    def n(self) -> int:
        return self.entries.shape[0]

    def word(self, j: int) -> np.ndarray:
        """Row indices where candidate ``j`` is nonzero, ascending."""
        return np.flatnonzero(self.entries[:, [j - 1]].toarray().ravel())

    def toarray(self) -> np.ndarray:
        return self.entries.toarray()


def _check_even(n: int):
    if n % 2 or n < 4:
        raise ConfigurationError(f"dictionary size must be even and >= 4, got {n}")


def build_symmetry_dictionary(n: int) -> StructureDictionary:
    _check_even(n)
    half = n // 2
    j = np.arange(1, half + 1)
    rows = np.concatenate([j, n - j[:-1]])
    cols = np.concatenate([j - 1, j[:-1] - 1])
    data = np.ones(rows.shape[0])
    mat = sparse.csc_array((data, (rows, cols)), shape=(n, half))
    return StructureDictionary(mat, DictionaryKind.SYMMETRY)


def build_asymptotic_dictionary(n: int, d: int, sigma_a2: float = 1.0) -> StructureDictionary:
    """|asymptotic CA| of candidate period n/j for every j, DC zeroed, unit l1 columns.

    Candidates whose period is shorter than the delay have an all-zero column.
    """
    _check_even(n)
    if d < 0:
        raise ConfigurationError("delay must be nonnegative")
    half = n // 2
    rows_all, cols_all, vals_all = [], [], []
    for j in range(1, half + 1):
        period = n / j
        if abs(d) > period:
            continue
        m = np.arange(-(half // j), half // j + 1)
        k = m * j
        k = k[(k != 0) & (k > -half) & (k <= half)]
        vals = np.abs(_closed_form(k, n, period, d, sigma_a2, 0.0))
        keep = vals > 1e-12 * max(vals.max(initial=0.0), 1e-300)
        k, vals = k[keep], vals[keep]
        total = vals.sum()
        if total <= 0:
            continue
        rows_all.append(np.mod(k, n))
        cols_all.append(np.full(k.shape[0], j - 1))
        vals_all.append(vals / total)
    if rows_all:
        rows, cols, vals = map(np.concatenate, (rows_all, cols_all, vals_all))
    else:
        rows = cols = np.zeros(0, dtype=int)
        vals = np.zeros(0)
    mat = sparse.csc_array((vals, (rows, cols)), shape=(n, half))
    return StructureDictionary(mat, DictionaryKind.ASYMPTOTIC, d)


def hades_estimate(p_u, op: MeasurementOperator, n_iter: int, dicts) -> RecoveryState:
    """Dictionary assisted greedy CA estimation.

    ``dicts`` is one :class:`StructureDictionary` per delay, or a single one
    shared by all delays. Support starts at DC (fitted); every iteration adds all rows
    of the best scoring dictionary word (union over the per-delay words).
    Words already contained in the support are not reselected.
    """
    p, _ = _as_array(p_u)
    _check_inputs(p, op, n_iter)
    n_d = p.shape[1]
    if isinstance(dicts, StructureDictionary):
        dicts = [dicts] * n_d
    dicts = list(dicts)
    if len(dicts) != n_d:
        raise ConfigurationError(f"need {n_d} dictionaries, got {len(dicts)}")
    if len({dk.kind for dk in dicts}) != 1:
        raise ConfigurationError("dictionaries must all be of one kind")
    if any(dk.n != op.n for dk in dicts):
        raise ConfigurationError("dictionary size differs from the CA size")

    mats = [dk.entries for dk in dicts]
    pattern = mats[0] != 0
    for mat in mats[1:]:
        pattern = pattern + (mat != 0)
    pattern = sparse.csc_array(pattern.astype(float))
    word_len = np.asarray(pattern.sum(axis=0)).ravel()

    support: list[int] = [0]
    in_support = np.zeros(op.n, dtype=bool)
    in_support[0] = True
    # the first residual is taken after fitting DC; an unfitted DC leaks into every
    # bin of the undersampled spectrum and can outscore the true fundamental
    coef, residual, rank_def = op.solve(p, support)
    history = [np.linalg.norm(residual, axis=0)]
    iterations = 0
    for _ in range(n_iter):
        corr = np.abs(op.correlate(residual))
        score = np.zeros(op.n // 2)
        for col, mat in enumerate(mats):
            score += mat.T @ corr[:, col]
        covered = pattern.T @ in_support.astype(float)
        spent = (word_len == 0) | (covered >= word_len)
        score[spent] = -np.inf
        if not np.isfinite(score).any():
            break
        j = int(np.argmax(score)) + 1
        rows = pattern[:, [j - 1]].nonzero()[0]
        new = sorted(int(h) for h in rows if not in_support[h])
        support.extend(new)
        in_support[new] = True
        coef, residual, deficient = op.solve(p, support)
        rank_def |= deficient
        history.append(np.linalg.norm(residual, axis=0))
        iterations += 1
    return _state(op, support, coef, None, residual, history, rank_def, iterations,
                  method=f"hades-{dicts[0].kind.value}")


def fold(k: int, n: int) -> int:
    k = int(k) % n
    return min(k, n - k)


def primary_cycle_frequency(state: RecoveryState) -> int:
    """First non-DC support index, folded into 1..n/2."""
    n = state.estimate.n
    for k in state.support:
        if k % n:
            return fold(k, n)
    raise NoCycleFrequencyError("support holds no cycle frequency besides DC")
