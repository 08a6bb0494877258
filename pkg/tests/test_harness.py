import dataclasses
import json
import math

import numpy as np
import pytest

from cyclosense.caf import asymptotic_ca_matrix
from cyclosense.config import PROFILES
from cyclosense.detector import chi2_threshold
from cyclosense.harness import (
    METRIC_COLUMNS,
    SweepResults,
    TrialOutcome,
    _mse,
    collect,
    detection_rate,
    mse_metrics,
    pfa_calibration,
    run_trial,
    support_metrics,
    sweep,
    trial_seed,
)
from cyclosense.signals import SignalModel

SMALL = dataclasses.replace(PROFILES["fast"], trials=4, snr_grid=(0.0,), c_r_grid=(0.15,),
                            pfa_grid=(0.05,))


def test_classic_oracle_noise_free_detects():
    for seed in range(3):
        out = run_trial(SMALL, "classic-oracle", math.inf, None, trial_seed(seed, "x", 0, None, 0))
        assert out.error is None and out.verdict(chi2_threshold(0.01, 8))


def test_h0_short_circuit_counts_as_h0(monkeypatch):
    from cyclosense import harness
    from cyclosense.recovery import oracle_estimate

    monkeypatch.setattr(harness, "hades_estimate", lambda p, op, n_iter, d: oracle_estimate(p, op, [0]))
    out = run_trial(SMALL, "hades-sym", None, 0.15, trial_seed(0, "hades-sym", None, 0.15, 0), h0=True)
    assert out.statistic == 0.0 and out.k_test is None
    assert not out.verdict(0.0) and not out.hit and out.index_error == SMALL.n / 2


def test_trial_errors_are_recorded():
    out = run_trial(SMALL, "no-such-method", 0.0, 0.15, trial_seed(0, "c", 0, None, 0))
    assert out.error and "unknown method" in out.error
    assert not out.verdict(-1.0)


def test_trial_is_deterministic():
    a = run_trial(SMALL, "sober", 0.0, 0.15, trial_seed(3, "sober", 0.0, 0.15, 1))
    b = run_trial(SMALL, "sober", 0.0, 0.15, trial_seed(3, "sober", 0.0, 0.15, 1))
    assert a == b


def test_seed_streams_independent_of_trial_count():
    more = dataclasses.replace(SMALL, trials=8)
    a = collect(SMALL, methods=("omp",), workers=1)
    b = collect(more, methods=("omp",), workers=1)
    key = ("omp", 0.0, 0.15)
    assert b.h1[key][:4] == a.h1[key]


def test_pool_matches_inline():
    a = collect(SMALL, methods=("sober", "classic-oracle"), workers=1)
    b = collect(SMALL, methods=("sober", "classic-oracle"), workers=2)
    assert a.h1 == b.h1 and a.h0 == b.h0


def _fake(stats, plan=SMALL, **kw):
    outs = [TrialOutcome(s, 8, 125, **kw) for s in stats]
    return SweepResults(plan, {("sober", 0.0, 0.15): outs}, {("sober", 0.15): outs})


def test_rates_are_exact_ratios():
    plan = dataclasses.replace(SMALL, methods=("sober",), pfa_grid=(0.05, 0.5))
    res = _fake([0.0, 1.0, 20.0, 30.0], plan)
    recs = {r.pfa_nominal: r for r in detection_rate(plan, res)}
    assert recs[0.05].pd == 0.5 and recs[0.05].trials == 4
    assert recs[0.5].pd == 0.5  # thresholds 15.5 and 7.34
    cal = {r.pfa_nominal: r for r in pfa_calibration(plan, res)}
    assert cal[0.05].pfa_empirical == 0.5


def test_single_trial_detection_and_infinite_threshold():
    plan = dataclasses.replace(SMALL, methods=("sober",))
    assert detection_rate(plan, _fake([1e9], plan))[0].pd == 1.0
    assert detection_rate(plan, _fake([math.inf], plan))[0].pd == 1.0
    assert pfa_calibration(plan, _fake([10.0, 1e9], plan))[0].pfa_empirical == 0.5
    # a statistic can never exceed an infinite threshold
    assert not TrialOutcome(1e300, 8, 1).verdict(math.inf)


def test_maximize_over_c_r():
    plan = dataclasses.replace(SMALL, methods=("sober",), c_r_grid=(0.1, 0.15))
    h1 = {("sober", 0.0, 0.1): [TrialOutcome(0.0, 8, 1)] * 2,
          ("sober", 0.0, 0.15): [TrialOutcome(99.0, 8, 1), TrialOutcome(0.0, 8, 1)]}
    best = detection_rate(plan, SweepResults(plan, h1, {}), maximize=True)
    assert len(best) == 1 and best[0].c_r == 0.15 and best[0].pd == 0.5


def test_required_nominal_is_consistent():
    plan = dataclasses.replace(SMALL, methods=("sober",))
    stats = np.random.default_rng(0).chisquare(8, size=4000)
    rec = pfa_calibration(plan, _fake(stats, plan))[0]
    assert rec.pfa_required == pytest.approx(0.05, abs=0.015)


def test_support_metrics_caps_misses():
    plan = dataclasses.replace(SMALL, methods=("sober",))
    outs = [TrialOutcome(1.0, 8, 125, hit=True), TrialOutcome(0.0, 8, None, index_error=500.0),
            TrialOutcome(math.nan, 8, None, error="boom")]
    rec = support_metrics(plan, SweepResults(plan, {("sober", 0.0, 0.15): outs}, {}))[0]
    assert rec.hitrate == pytest.approx(1 / 3)
    assert rec.mean_abs_index_error == pytest.approx(1000 / 3)


def test_mse_zero_for_exact_reference():
    ref = asymptotic_ca_matrix(SignalModel(8), 1000, (1, 2, 3, 4))
    assert _mse(ref, SMALL) == (0.0, 0.0)
    bumped = ref.copy()
    bumped[0] += 1.0  # DC is not a spike row
    overall, spikes = _mse(bumped, SMALL)
    assert overall == pytest.approx(4 / 4000) and spikes == 0.0


def test_noise_free_hades_asy_support():
    plan = dataclasses.replace(SMALL, methods=("hades-asy",), snr_grid=(math.inf,), trials=5)
    rec = support_metrics(plan, collect(plan, include_h0=False, workers=1))[0]
    assert rec.hitrate == 1.0 and rec.mean_abs_index_error == 0.0
    assert PROFILES["full"].n // PROFILES["full"].n_sym == 500


def test_metric_ranges():
    res = collect(SMALL, workers=1)
    recs = (detection_rate(SMALL, res) + pfa_calibration(SMALL, res)
            + support_metrics(SMALL, res) + mse_metrics(SMALL, res))
    for r in recs:
        for name in ("pd", "pfa_empirical", "hitrate", "hitrate_full"):
            v = getattr(r, name)
            assert v is None or 0 <= v <= 1
        for name in ("mse_overall", "mse_spikes"):
            v = getattr(r, name)
            assert v is None or v >= 0
        assert r.trials == SMALL.trials


def test_sweep_outputs(tmp_path):
    plan = dataclasses.replace(SMALL, methods=("classic-oracle", "hades-sym"), trials=2)
    manifest = sweep(plan, tmp_path, workers=1)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == sorted([f"{f}.csv" for f in manifest["files"]] + ["manifest.json"])
    assert len(manifest["files"]) == 5
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk["config_hash"] == plan.config_hash() and on_disk["seed"] == plan.seed
    for info in on_disk["files"].values():
        header = (tmp_path / info["path"]).read_text().splitlines()[0]
        assert header.split(",") == METRIC_COLUMNS == info["columns"]
