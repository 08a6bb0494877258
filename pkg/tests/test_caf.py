import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclosense import oracles
from cyclosense.caf import (
    DelayProductMatrix,
    SensingConfig,
    asymptotic_ca,
    asymptotic_ca_vector,
    ca_matrix_from_products,
    classical_ca,
    consecutive_count,
    delay_product,
    delay_product_matrix,
    harmonic_pattern,
    verify_series_identity,
)
from cyclosense.signals import ConfigurationError, SignalModel, generate_signal

from conftest import random_complex


def test_delay_product_small_cases():
    x = np.array([1, 1j, -1])
    assert np.allclose(delay_product(x, 0), [1, 1, 1])
    assert np.allclose(delay_product(x, 1), [-1j, -1j, 0])


@given(st.integers(2, 40), st.integers(0, 39), st.integers(0, 2**32 - 1))
@settings(max_examples=50, deadline=None)
def test_delay_product_matches_loop(n, d, seed):
    d = d % n
    x = random_complex(np.random.default_rng(seed), n)
    out = delay_product(x, d)
    assert np.allclose(out, oracles.delay_product_loop(x, d), atol=0, rtol=1e-15)
    assert np.all(out[n - d:] == 0)


def test_delay_product_rejects_out_of_range():
    with pytest.raises(ValueError):
        delay_product(np.ones(4), 4)


def test_constant_signal_is_dc_only():
    ca = classical_ca(np.ones(16), [0])
    expected = np.zeros(16)
    expected[0] = 1
    assert np.allclose(ca.entries[:, 0], expected, atol=1e-15)


def test_dc_at_zero_delay_is_power(rng):
    x = random_complex(rng, 50)
    ca = classical_ca(x, [0, 1])
    assert ca.entries[0, 0].imag == pytest.approx(0, abs=1e-15)
    assert ca.entries[0, 0].real == pytest.approx(np.mean(np.abs(x) ** 2))


def test_classical_matches_direct_sum(rng):
    for _ in range(5):
        x = random_complex(rng, 32)
        fast = classical_ca(x, (1, 2, 3)).entries
        slow = oracles.ca_direct(x, (1, 2, 3))
        assert np.max(np.abs(fast - slow)) / np.max(np.abs(slow)) < 1e-12


def test_products_and_direct_path_agree(rng):
    x = random_complex(rng, 100)
    a = ca_matrix_from_products(delay_product_matrix(x, (1, 4))).entries
    b = classical_ca(x, (1, 4)).entries
    assert np.allclose(a, b, rtol=1e-12, atol=0)
    zero = ca_matrix_from_products(DelayProductMatrix(np.zeros((8, 2)), (1, 2)))
    assert not np.any(zero.entries)


def test_classical_size_mismatch():
    with pytest.raises(ValueError):
        classical_ca(np.ones(8), [1], n=16)
    with pytest.raises(ConfigurationError):
        classical_ca(np.ones(8), [])


def test_bpsk_harmonic_approaches_closed_form():
    # averaging over symbol draws leaves the expectation, (n-d)/n times the limit
    model = SignalModel(8)
    n = 4000
    acc = 0
    for s in range(100):
        acc += classical_ca(generate_signal(model, n, seed=s), [1]).entries[500, 0]
    acc /= 100
    target = asymptotic_ca(500, 1, model, n)
    assert abs(acc - target * (n - 1) / n) < 0.01


def test_asymptotic_special_values():
    model = SignalModel(8)
    assert asymptotic_ca(500, 0, model, 4000) == pytest.approx(0, abs=1e-15)
    assert asymptotic_ca(0, 0, model, 4000) == pytest.approx(1)
    assert asymptotic_ca(7, 1, model, 4000) == 0
    with pytest.raises(ValueError):
        asymptotic_ca(500, 9, model, 4000)


def test_asymptotic_against_aliasing_sum():
    model = SignalModel(8)
    ref = oracles.ca_aliasing_sum(500, 4000, 8, 1, terms=200_000)
    assert abs(asymptotic_ca(500, 1, model, 4000) - ref) < 1e-6
    # frozen from the aliasing sum
    assert asymptotic_ca(500, 1, model, 4000) == pytest.approx(
        complex(-0.1154849416, -0.0478354290), abs=1e-9)


def test_asymptotic_vector_support_and_symmetry():
    v = asymptotic_ca_vector(SignalModel(8), 16, 1)
    assert set(np.flatnonzero(np.abs(v) > 1e-12)) == {0, 2, 4, 6, 8, 10, 12, 14}
    v = asymptotic_ca_vector(SignalModel(8), 4000, 2)
    assert np.allclose(np.abs(v[1:]), np.abs(v[1:][::-1]))
    for k in (0, 500, 1000, 3500):
        signed = k if k <= 2000 else k - 4000
        assert abs(v[k] - oracles.ca_aliasing_sum(signed, 4000, 8, 2, terms=100_000)) < 1e-6


def test_harmonic_pattern_allows_fractional_period():
    pat = harmonic_pattern(64, 3, 1)
    signed = np.where(np.arange(64) <= 32, np.arange(64), np.arange(64) - 64)
    assert np.all(pat[signed % 3 != 0] == 0)
    assert np.all(pat[signed % 3 == 0] > 0)
    assert np.all(harmonic_pattern(64, 32, 3) == 0)


def test_series_identity():
    assert verify_series_identity(1, 8, 100_000) < 1e-4
    assert verify_series_identity(1, 2, 1000) < 1e-3
    coarse, fine = verify_series_identity(1, 3, 1000), verify_series_identity(1, 3, 2000)
    assert fine < coarse
    with pytest.raises(ValueError):
        verify_series_identity(4, 4)


def test_sensing_config_validation():
    assert SensingConfig(4000, 1000, c_r=0.15).consecutive_count == 150
    assert consecutive_count(0.01, 1000) == 10
    for kwargs in ({"m_avail": 0}, {"m_avail": 20}, {"c_r": 0.6}, {"c_r": 0.001},
                   {"delays": (1, 1)}, {"delays": (0,)}, {"delays": ()}):
        args = {"n": 16, "m_avail": 8, **kwargs}
        with pytest.raises(ConfigurationError):
            SensingConfig(**args)


def test_series_identity_scalar():
    a = 1 / 8
    assert math.pi / math.sin(math.pi * a) == pytest.approx(8.2093, abs=1e-4)
