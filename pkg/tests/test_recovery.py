import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclosense import oracles
from cyclosense.caf import SensingConfig, asymptotic_ca_matrix, classical_ca, delay_product_matrix
from cyclosense.recovery import (
    MeasurementOperator,
    NoCycleFrequencyError,
    RecoveryState,
    build_asymptotic_dictionary,
    build_mask,
    build_symmetry_dictionary,
    fold,
    hades_estimate,
    omp_estimate,
    oracle_estimate,
    primary_cycle_frequency,
    somp_estimate,
    undersample,
)
from cyclosense.signals import ConfigurationError, SignalModel, generate_signal

from conftest import random_complex


def _noise_free(n, m, seed, delays=(1, 2, 3, 4), c_r=0.15):
    cfg = SensingConfig(n, m, delays, c_r)
    x = generate_signal(SignalModel(8), n, seed=seed)
    mask = build_mask(cfg, seed)
    p_u = undersample(delay_product_matrix(x, delays), mask)
    return p_u, MeasurementOperator(n, mask, delays), cfg


def _from_ca(ca, n, m, seed, delays):
    mask = build_mask(SensingConfig(n, m, delays, 0.1), seed)
    op = MeasurementOperator(n, mask, delays)
    return op.apply(ca), op


def test_mask_construction():
    mask = build_mask(SensingConfig(8, 4, (1,), 0.5), seed=3)
    assert list(mask.indices[:2]) == [0, 1]
    assert set(mask.indices[2:]) <= set(range(2, 8))
    mask = build_mask(SensingConfig(4000, 1000, (1,), 0.15), seed=3)
    assert mask.consecutive_count == 150
    assert mask.m == 1000 and len(set(mask.indices)) == 1000
    assert np.all(np.diff(mask.indices[150:]) > 0)
    assert np.array_equal(mask.indices[:150], np.arange(150))


def test_mask_is_seeded():
    cfg = SensingConfig(100, 40, (1,), 0.1)
    assert np.array_equal(build_mask(cfg, 5).indices, build_mask(cfg, 5).indices)
    assert not np.array_equal(build_mask(cfg, 5).indices, build_mask(cfg, 6).indices)


def test_undersample_gather(rng):
    x = random_complex(rng, 64)
    p = delay_product_matrix(x, (1, 3))
    full = undersample(p, build_mask(SensingConfig(64, 64, (1, 3), 0.5), 0))
    assert np.array_equal(full.entries, p.entries)
    cfg = SensingConfig(64, 20, (1, 3), 0.2)
    mask = build_mask(cfg, 9)
    assert np.array_equal(undersample(p, mask).entries, oracles.gather_loop(p.entries, mask.indices))


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_operator_round_trip(seed):
    rng = np.random.default_rng(seed)
    n, delays = 128, (1, 2, 5)
    x = random_complex(rng, n)
    mask = build_mask(SensingConfig(n, 50, delays, 0.2), rng)
    p = delay_product_matrix(x, delays)
    via_op = MeasurementOperator(n, mask, delays).apply(classical_ca(x, delays))
    assert np.allclose(via_op, undersample(p, mask).entries, rtol=0, atol=1e-12 * np.abs(p.entries).max())


def test_correlate_is_adjoint_of_dense(rng):
    n, delays = 32, (1, 2)
    mask = build_mask(SensingConfig(n, 12, delays, 0.25), 1)
    op = MeasurementOperator(n, mask, delays)
    r = random_complex(rng, 12 * 2).reshape(12, 2)
    for col in range(2):
        dense = op.dense(col)
        assert np.allclose(op.correlate(r)[:, col], dense.conj().T @ r[:, col])


def test_somp_one_sparse_exact(rng):
    n, delays = 64, (1, 2)
    ca = np.zeros((n, 2), dtype=complex)
    ca[11] = random_complex(rng, 2)
    p_u, op = _from_ca(ca, n, 24, 0, delays)
    state = somp_estimate(p_u, op, 1)
    assert state.support == [11]
    assert np.allclose(state.estimate.entries, ca, atol=1e-9)
    with pytest.raises(ValueError):
        somp_estimate(p_u, op, 0)


def test_somp_finds_bpsk_harmonics():
    p_u, op, _ = _noise_free(256, 128, 4)
    state = somp_estimate(p_u, op, 2 * 256 // 8)
    truth = np.abs(asymptotic_ca_matrix(SignalModel(8), 256, (1, 2, 3, 4))).max(axis=1) > 1e-9
    assert set(np.flatnonzero(truth)) <= set(state.support)
    assert primary_cycle_frequency(state) == 32


def test_residuals_non_increasing(rng):
    x = random_complex(rng, 128)
    delays = (1, 2)
    mask = build_mask(SensingConfig(128, 64, delays, 0.1), 2)
    p_u = undersample(delay_product_matrix(x, delays), mask)
    op = MeasurementOperator(128, mask, delays)
    for state in (somp_estimate(p_u, op, 10), omp_estimate(p_u, op, 10)):
        hist = np.array(state.residual_history)
        assert np.all(np.diff(hist, axis=0) <= 1e-9)
        zero_rows = np.setdiff1d(np.arange(128), state.support)
        assert not np.any(state.estimate.entries[zero_rows])


def test_omp_single_delay_matches_somp(rng):
    x = random_complex(rng, 96)
    mask = build_mask(SensingConfig(96, 40, (2,), 0.1), 3)
    p_u = undersample(delay_product_matrix(x, (2,)), mask)
    op = MeasurementOperator(96, mask, (2,))
    a, b = omp_estimate(p_u, op, 5), somp_estimate(p_u, op, 5)
    assert a.support == b.support
    assert np.allclose(a.estimate.entries, b.estimate.entries)


def test_omp_per_delay_equals_single_column_runs(rng):
    n, delays = 96, (1, 2, 3)
    x = random_complex(rng, n)
    mask = build_mask(SensingConfig(n, 40, delays, 0.1), 8)
    p_u = undersample(delay_product_matrix(x, delays), mask)
    state = omp_estimate(p_u, MeasurementOperator(n, mask, delays), 4)
    for col, d in enumerate(delays):
        single = somp_estimate(p_u.entries[:, [col]], MeasurementOperator(n, mask, (d,)), 4)
        assert state.per_delay_support[col] == single.support
        assert np.allclose(state.estimate.entries[:, col], single.estimate.entries[:, 0])


def test_symmetry_dictionary_small():
    d = build_symmetry_dictionary(6).toarray()
    assert np.array_equal(d[:, 0], [0, 1, 0, 0, 0, 1])
    assert np.array_equal(d[:, 1], [0, 0, 1, 0, 1, 0])
    assert np.array_equal(d[:, 2], [0, 0, 0, 1, 0, 0])
    d4 = build_symmetry_dictionary(4)
    assert list(d4.word(2)) == [2]
    sums = build_symmetry_dictionary(20).toarray().sum(axis=0)
    assert np.all(sums[:-1] == 2) and sums[-1] == 1


def test_asymptotic_dictionary_properties():
    d = build_asymptotic_dictionary(64, 1)
    dense = d.toarray()
    assert not np.any(dense[0])
    norms = dense.sum(axis=0)
    live = norms > 0
    assert np.allclose(norms[live], 1, atol=1e-12)
    assert live.all()
    # candidate 32 has a 2-sample period, shorter than a delay of 3
    assert not build_asymptotic_dictionary(64, 3).toarray()[:, 31].any()
    signed = np.where(np.arange(64) <= 32, np.arange(64), np.arange(64) - 64)
    for j in (3, 8, 13):
        assert np.all(signed[d.word(j)] % j == 0)
    ref = np.abs(asymptotic_ca_matrix(SignalModel(8), 64, (1,))[:, 0])
    ref[0] = 0
    assert np.array_equal(d.word(8), np.flatnonzero(ref > 1e-12))
    assert np.allclose(dense[:, 7], ref / ref.sum())


def test_hades_symmetric_pair_in_one_iteration(rng):
    n, delays = 64, (1, 2)
    ca = np.zeros((n, 2), dtype=complex)
    vals = random_complex(rng, 2)
    ca[5], ca[n - 5] = vals, np.conj(vals)
    p_u, op = _from_ca(ca, n, 30, 1, delays)
    state = hades_estimate(p_u, op, 1, build_symmetry_dictionary(n))
    assert state.support == [0, 5, 59]
    assert len(state.support) <= 3
    assert np.allclose(state.estimate.entries, ca, atol=1e-9)


def test_hades_asymptotic_one_iteration_covers_harmonics():
    delays = (1, 2, 3, 4)
    p_u, op, _ = _noise_free(256, 128, 2)
    dicts = [build_asymptotic_dictionary(256, d) for d in delays]
    state = hades_estimate(p_u, op, 1, dicts)
    harmonics = {(m * 32) % 256 for m in range(-4, 5)}
    assert harmonics <= set(state.support)
    assert primary_cycle_frequency(state) == 32


def test_hades_skips_spent_words():
    n = 16
    ca = np.zeros((n, 1), dtype=complex)
    ca[3] = ca[13] = 1
    p_u, op = _from_ca(ca, n, 12, 0, (1,))
    state = hades_estimate(p_u, op, 20, build_symmetry_dictionary(n))
    assert len(state.support) == n
    assert state.iterations_run == n // 2


def test_hades_dictionary_checks():
    p_u, op, _ = _noise_free(64, 32, 0, delays=(1, 2))
    with pytest.raises(ConfigurationError):
        hades_estimate(p_u, op, 1, [build_symmetry_dictionary(64)])
    with pytest.raises(ConfigurationError):
        hades_estimate(p_u, op, 1, build_symmetry_dictionary(32))


def test_primary_cycle_frequency_folding():
    def state(support, n):
        est = oracle_estimate(np.zeros((4, 1)), MeasurementOperator(n, [0, 1, 2, 3], (1,)), [0])
        return RecoveryState(support, est.estimate, np.zeros(1), 1)

    assert primary_cycle_frequency(state([0, 500, 3500], 4000)) == 500
    assert primary_cycle_frequency(state([96], 256)) == 96
    assert primary_cycle_frequency(state([0, 3500], 4000)) == 500
    with pytest.raises(NoCycleFrequencyError):
        primary_cycle_frequency(state([0], 4000))
    assert fold(3999, 4000) == 1


def test_hades_noise_free_fundamental_at_full_size():
    p_u, op, _ = _noise_free(4000, 1000, 6)
    state = hades_estimate(p_u, op, 1, build_symmetry_dictionary(4000))
    assert primary_cycle_frequency(state) == 500


def test_state_json_round_trip():
    p_u, op, _ = _noise_free(64, 32, 0, delays=(1, 2))
    state = somp_estimate(p_u, op, 3)
    import json
    blob = json.loads(state.to_json())
    assert blob["support"] == state.support
    assert blob["iterations_run"] == 3
    assert len(blob["residual_norms"]) == 2
