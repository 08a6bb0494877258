"""Monte-Carlo driver: single trials, grid collection and the figure-family metrics.

Every trial draws from its own PRNG stream keyed by (master seed, method,
grid point, hypothesis, trial index), so adding trials never changes the
earlier ones and the worker count never changes the output.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from pathlib import Path

import numpy as np

from . import __version__
from .caf import SensingConfig, asymptotic_ca_matrix, classical_ca, delay_product_matrix, harmonic_rows
from .config import ExperimentPlan
from .detector import SpectralWindow, chi2_tail, chi2_threshold, sparse_tdt_statistic, tdt_statistic
from .recovery import (
    MeasurementOperator,
    build_asymptotic_dictionary,
    build_mask,
    build_symmetry_dictionary,
    fold,
    hades_estimate,
    omp_estimate,
    oracle_estimate,
    somp_estimate,
    undersample,
)
from .signals import ConfigurationError, generate_h0, generate_h1

log = logging.getLogger(__name__)

FAMILIES = {
    "fig1_pd_vs_cr": "detection rate over consecutive sample ratio at the fig1 SNR",
    "fig2_max_pd_vs_snr": "detection rate maximized over the c_r grid, per SNR",
    "fig3_pfa_calibration": "H0 false-alarm rate per nominal pfa and the nominal pfa needed to hit it",
    "fig4_support": "hitrate and absolute index error over SNR at the plan c_r",
    "fig5_mse": "overall and spike MSE against the asymptotic CA over SNR at the plan c_r",
}


@dataclass
class TrialOutcome:
    statistic: float
    dof: int
    k_test: int | None
    regularized: bool = False
    hit: bool = False
    hit_full: bool = False
    index_error: float = 0.0
    mse_overall: float = math.nan
    mse_spikes: float = math.nan
    error: str | None = None

    def verdict(self, threshold: float) -> bool:
        return self.error is None and self.statistic > threshold


@dataclass
class MetricRecord:
    method: str
    snr_db: float | None
    pfa_nominal: float | None
    c_r: float | None
    pd: float | None = None
    pfa_empirical: float | None = None
    pfa_required: float | None = None
    hitrate: float | None = None
    hitrate_full: float | None = None
    mean_abs_index_error: float | None = None
    mse_overall: float | None = None
    mse_spikes: float | None = None
    trials: int = 0


METRIC_COLUMNS = [f.name for f in fields(MetricRecord)]


def trial_seed(master: int, method: str, snr_db, c_r, t: int, hypothesis: str = "H1") -> np.random.SeedSequence:
    point = f"{method}|{hypothesis}|{snr_db!r}|{c_r!r}"
    return np.random.SeedSequence(entropy=int(master), spawn_key=(zlib.crc32(point.encode()), int(t)))


@lru_cache(maxsize=8)
def _symmetry_dictionary(n):
    return build_symmetry_dictionary(n)


@lru_cache(maxsize=8)
def _asymptotic_dictionaries(n, delays):
    return [build_asymptotic_dictionary(n, d) for d in delays]


@lru_cache(maxsize=16)
def _reference(n, n_sym, sigma_a2, delays):
    from .signals import SignalModel

    model = SignalModel(n_sym, sigma_a2=sigma_a2)
    ref = asymptotic_ca_matrix(model, n, delays)
    spikes = harmonic_rows(n, n_sym)
    true_rows = spikes[np.any(np.abs(ref[spikes]) > 1e-12, axis=1)]
    return ref, spikes, true_rows


def _mse(estimate: np.ndarray, plan: ExperimentPlan):
    n = estimate.shape[0]
    ref, spikes, _ = _reference(n, plan.n_sym, plan.sigma_a2, plan.delays)
    err = np.abs(estimate - ref) ** 2
    return float(err.sum() / err.size), float(err[spikes].mean())


BLIND_METHODS = ("omp", "sober", "hades-sym", "hades-asy")


def sense(x, method: str, cfg: SensingConfig, window: SpectralWindow, rng,
          n_iter_greedy: int = 8, n_iter_hades: int = 3, oracle_rows=None):
    """Undersample ``x``, recover the sparse CA with ``method`` and run the sparse TDT.

    The oracle variants need ``oracle_rows``, the true nonzero cycle-frequency
    rows; they fit exactly that support (plus DC) and test its fundamental.
    Returns the unthresholded test result and the recovery state.
    """
    mask = build_mask(cfg, rng)
    p_u = undersample(delay_product_matrix(x, cfg.delays), mask)
    op = MeasurementOperator(cfg.n, mask, cfg.delays)
    k_test = None
    if method == "omp":
        state = omp_estimate(p_u, op, n_iter_greedy)
    elif method == "sober":
        state = somp_estimate(p_u, op, n_iter_greedy)
    elif method == "hades-sym":
        state = hades_estimate(p_u, op, n_iter_hades, _symmetry_dictionary(cfg.n))
    elif method == "hades-asy":
        state = hades_estimate(p_u, op, n_iter_hades, _asymptotic_dictionaries(cfg.n, cfg.delays))
    elif method in ("sober-oracle", "hades-oracle"):
        if not oracle_rows:
            raise ConfigurationError(f"{method} needs the true cycle-frequency rows")
        state = oracle_estimate(p_u, op, [0] + [int(k) for k in oracle_rows])
        state.method = method
        k_test = min(fold(k, cfg.n) for k in oracle_rows)
    else:
        raise ConfigurationError(f"unknown method {method}")
    res = sparse_tdt_statistic(p_u, state, cfg, window.fitted(cfg.consecutive_count), k_test=k_test)
    return res, state


def run_trial(plan: ExperimentPlan, method: str, snr_db: float | None, c_r: float | None,
              trial_seed, h0: bool = False) -> TrialOutcome:
    """One pipeline run on a fresh H1 signal (or an H0 noise block when ``h0``)."""
    rng = np.random.default_rng(trial_seed)
    try:
        if h0:
            x = generate_h0(plan.n, plan.noise_power, rng)
        else:
            x = generate_h1(plan.model(), plan.n, snr_db, rng)
        window = SpectralWindow(plan.window_length, plan.kaiser_beta)
        k_true = plan.n // plan.n_sym

        if method == "classic-oracle":
            size = plan.classic_size
            ca = classical_ca(x.samples[:size], plan.delays)
            res = tdt_statistic(ca, size // plan.n_sym, window.fitted(size))
            overall, spikes = _mse(ca.entries, plan)
            return TrialOutcome(res.statistic, res.dof, k_true, res.regularized, True, True, 0.0,
                                overall, spikes)

        cfg = plan.sensing(c_r)
        _, _, true_rows = _reference(plan.n, plan.n_sym, plan.sigma_a2, plan.delays)
        oracle = [int(k) for k in true_rows] if method in ("sober-oracle", "hades-oracle") else None
        res, state = sense(x, method, cfg, window, rng, plan.n_iter_greedy, plan.n_iter_hades,
                           oracle_rows=oracle)
        overall, spikes = _mse(state.estimate.entries, plan)
        found = {int(k) for k in state.support if k % plan.n}
        if res.k_test is None:
            hit, err = False, plan.n / 2
        else:
            k_rec = fold(res.k_test, plan.n)
            hit, err = k_rec == k_true, float(abs(k_rec - k_true))
        hit_full = found == {int(k) for k in true_rows}
        return TrialOutcome(res.statistic, res.dof, res.k_test, res.regularized, hit, hit_full,
                            err, overall, spikes)
    except Exception as exc:  # recorded per trial, the sweep carries on
        log.debug("trial failed: %s", exc, exc_info=True)
        return TrialOutcome(math.nan, 2 * len(plan.delays), None, error=f"{type(exc).__name__}: {exc}")


def _point_outcomes(args):
    plan, method, snr_db, c_r, h0 = args
    hyp = "H0" if h0 else "H1"
    return [run_trial(plan, method, snr_db, c_r, trial_seed(plan.seed, method, snr_db, c_r, t, hyp), h0)
            for t in range(plan.trials)]


def worker_count() -> int:
    env = os.environ.get("CYCLOSENSE_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            log.warning("ignoring CYCLOSENSE_THREADS=%r", env)
    return os.cpu_count() or 1


def _run_points(points, workers: int | None = None):
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(points) <= 1:
        return [_point_outcomes(p) for p in points]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_point_outcomes, points))


def _cr_key(method, c_r):
    # the classical estimator never looks at the mask
    return None if method == "classic-oracle" else c_r


@dataclass
class SweepResults:
    plan: ExperimentPlan
    h1: dict
    h0: dict

    def h1_outcomes(self, method, snr_db, c_r):
        return self.h1[(method, snr_db, _cr_key(method, c_r))]

    def h0_outcomes(self, method, c_r):
        return self.h0[(method, _cr_key(method, c_r))]


def collect(plan: ExperimentPlan, snrs=None, c_rs=None, methods=None, include_h0=True,
            workers: int | None = None) -> SweepResults:
    """Run every (method, snr, c_r) H1 grid point and every (method, c_r) H0 point."""
    snrs = plan.snr_grid if snrs is None else tuple(snrs)
    c_rs = plan.c_r_grid if c_rs is None else tuple(c_rs)
    methods = plan.methods if methods is None else tuple(methods)
    h1_keys, h0_keys = [], []
    for method in methods:
        crs = sorted({_cr_key(method, c) for c in c_rs}, key=lambda v: (v is not None, v or 0))
        for c_r in crs:
            h1_keys.extend((method, s, c_r) for s in snrs)
            if include_h0:
                h0_keys.append((method, c_r))
    points = [(plan, m, s, c, False) for m, s, c in h1_keys]
    points += [(plan, m, None, c, True) for m, c in h0_keys]
    outcomes = _run_points(points, workers)
    h1 = dict(zip(h1_keys, outcomes[: len(h1_keys)]))
    h0 = dict(zip(h0_keys, outcomes[len(h1_keys):]))
    return SweepResults(plan, h1, h0)


def _rate(outcomes, threshold) -> float:
    return sum(o.verdict(threshold) for o in outcomes) / len(outcomes)


def _dof(plan):
    return 2 * len(plan.delays)


def detection_rate(plan: ExperimentPlan, results: SweepResults | None = None, maximize: bool = False):
    """Pd per (method, snr, c_r, pfa); with ``maximize`` the best c_r per (method, snr, pfa)."""
    if results is None:
        results = collect(plan)
    records = []
    snrs = sorted({k[1] for k in results.h1})
    for method in plan.methods:
        for snr in snrs:
            for pfa in plan.pfa_grid:
                thr = chi2_threshold(pfa, _dof(plan))
                rows = []
                for c_r in plan.c_r_grid:
                    key = (method, snr, _cr_key(method, c_r))
                    if key not in results.h1:
                        continue
                    outs = results.h1[key]
                    rows.append(MetricRecord(method, snr, pfa, c_r, pd=_rate(outs, thr), trials=len(outs)))
                if maximize and rows:
                    best = max(rows, key=lambda r: (r.pd, -r.c_r))
                    records.append(best)
                else:
                    records.extend(rows)
    return records


def _required_nominal(stats: np.ndarray, target: float, dof: int) -> float:
    """Nominal pfa whose chi-squared threshold yields the empirical rate ``target``."""
    stats = np.sort(stats[np.isfinite(stats)]) if stats.size else stats
    if stats.size == 0:
        return math.nan
    idx = int(math.ceil((1.0 - target) * stats.size)) - 1
    idx = min(max(idx, 0), stats.size - 1)
    return chi2_tail(float(stats[idx]), dof)


def pfa_calibration(plan: ExperimentPlan, results: SweepResults | None = None):
    if results is None:
        results = collect(plan)
    records = []
    for method in plan.methods:
        for c_r in plan.c_r_grid:
            key = (method, _cr_key(method, c_r))
            if key not in results.h0:
                continue
            outs = results.h0[key]
            stats = np.array([o.statistic if o.error is None else -np.inf for o in outs])
            for pfa in plan.pfa_grid:
                thr = chi2_threshold(pfa, _dof(plan))
                records.append(MetricRecord(method, None, pfa, c_r, pfa_empirical=_rate(outs, thr),
                                            pfa_required=_required_nominal(stats, pfa, _dof(plan)),
                                            trials=len(outs)))
    return records


def support_metrics(plan: ExperimentPlan, results: SweepResults | None = None, c_r: float | None = None):
    c_r = plan.c_r if c_r is None else c_r
    if results is None:
        results = collect(plan, c_rs=(c_r,), include_h0=False)
    records = []
    for method in plan.methods:
        for snr in sorted({k[1] for k in results.h1}):
            key = (method, snr, _cr_key(method, c_r))
            if key not in results.h1:
                continue
            outs = results.h1[key]
            ok = [o for o in outs if o.error is None]
            errs = [o.index_error if o.error is None else plan.n / 2 for o in outs]
            records.append(MetricRecord(
                method, snr, None, c_r,
                hitrate=sum(o.hit for o in ok) / len(outs),
                hitrate_full=sum(o.hit_full for o in ok) / len(outs),
                mean_abs_index_error=float(np.mean(errs)),
                trials=len(outs)))
    return records


def mse_metrics(plan: ExperimentPlan, results: SweepResults | None = None, c_r: float | None = None):
    c_r = plan.c_r if c_r is None else c_r
    if results is None:
        results = collect(plan, c_rs=(c_r,), include_h0=False)
    records = []
    for method in plan.methods:
        for snr in sorted({k[1] for k in results.h1}):
            key = (method, snr, _cr_key(method, c_r))
            if key not in results.h1:
                continue
            ok = [o for o in results.h1[key] if o.error is None]
            records.append(MetricRecord(
                method, snr, None, c_r,
                mse_overall=float(np.mean([o.mse_overall for o in ok])) if ok else math.nan,
                mse_spikes=float(np.mean([o.mse_spikes for o in ok])) if ok else math.nan,
                trials=len(results.h1[key])))
    return records


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def records_to_csv(records) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(METRIC_COLUMNS)
    for rec in records:
        row = asdict(rec)
        writer.writerow([_fmt(row[c]) for c in METRIC_COLUMNS])
    return buf.getvalue()


def version_string() -> str:
    return f"v{__version__}"


def sweep(plan: ExperimentPlan, out_dir, workers: int | None = None) -> dict:
    """Run the full plan and write one CSV per figure family plus ``manifest.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = collect(plan, workers=workers)
    fig1_snr = plan.fig1_snr
    if fig1_snr not in plan.snr_grid:
        extra = collect(plan, snrs=(fig1_snr,), include_h0=False, workers=workers)
        results.h1.update(extra.h1)
    fig1 = [r for r in detection_rate(plan, results) if r.snr_db == fig1_snr]
    fig2 = [r for r in detection_rate(plan, results, maximize=True) if r.snr_db in plan.snr_grid]
    families = {
        "fig1_pd_vs_cr": fig1,
        "fig2_max_pd_vs_snr": fig2,
        "fig3_pfa_calibration": pfa_calibration(plan, results),
        "fig4_support": [r for r in support_metrics(plan, results) if r.snr_db in plan.snr_grid],
        "fig5_mse": [r for r in mse_metrics(plan, results) if r.snr_db in plan.snr_grid],
    }
    failures = sum(o.error is not None for outs in list(results.h1.values()) + list(results.h0.values())
                   for o in outs)
    files = {}
    for name, records in families.items():
        path = out / f"{name}.csv"
        path.write_text(records_to_csv(records))
        files[name] = {"path": path.name, "columns": METRIC_COLUMNS, "description": FAMILIES[name],
                       "rows": len(records)}
    manifest = {
        "schema_version": 1,
        "version": version_string(),
        "config_hash": plan.config_hash(),
        "seed": plan.seed,
        "trials": plan.trials,
        "failed_trials": failures,
        "plan": plan.to_dict(),
        "files": files,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest
