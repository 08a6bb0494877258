"""Blind compressive cyclostationary spectrum sensing."""

__version__ = "0.1.0"

from .caf import (
    CycleAutocorrelationMatrix,
    DelayProductMatrix,
    SensingConfig,
    asymptotic_ca,
    asymptotic_ca_matrix,
    classical_ca,
    delay_product,
    delay_product_matrix,
)
from .detector import (
    SpectralWindow,
    TestResult,
    Verdict,
    chi2_threshold,
    decide,
    sparse_tdt_statistic,
    tdt_statistic,
)
from .recovery import (
    MeasurementOperator,
    RecoveryState,
    build_asymptotic_dictionary,
    build_mask,
    build_symmetry_dictionary,
    hades_estimate,
    omp_estimate,
    somp_estimate,
    undersample,
)
from .signals import ConfigurationError, SampleRecord, SignalModel, generate_h0, generate_h1, generate_signal

__all__ = [
    "ConfigurationError", "CycleAutocorrelationMatrix", "DelayProductMatrix", "MeasurementOperator",
    "RecoveryState", "SampleRecord", "SensingConfig", "SignalModel", "SpectralWindow", "TestResult",
    "Verdict", "asymptotic_ca", "asymptotic_ca_matrix", "build_asymptotic_dictionary", "build_mask",
    "build_symmetry_dictionary", "chi2_threshold", "classical_ca", "decide", "delay_product",
    "delay_product_matrix", "generate_h0", "generate_h1", "generate_signal", "hades_estimate",
    "omp_estimate", "somp_estimate", "sparse_tdt_statistic", "tdt_statistic", "undersample",
]
