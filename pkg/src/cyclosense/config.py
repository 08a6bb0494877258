"""Experiment plans and their flat ``key = value`` config files.

A config file has a single ``[experiment]`` section and an explicit
``schema_version``. Unknown keys are rejected so parameter drift shows up as
an error instead of a silently ignored line.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path

from .caf import SensingConfig
from .signals import ConfigurationError, SignalModel

SCHEMA_VERSION = 1

METHODS = ("classic-oracle", "omp", "sober", "hades-sym", "hades-asy", "sober-oracle", "hades-oracle")
ORACLE_METHODS = ("classic-oracle", "sober-oracle", "hades-oracle")


@dataclass(frozen=True)
class ExperimentPlan:
    n: int = 4000
    m: int = 1000
    delays: tuple = (1, 2, 3, 4)
    n_sym: int = 8
    sigma_a2: float = 1.0
    c_r: float = 0.15
    snr_grid: tuple = (-4.0, -3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0, 4.0)
    pfa_grid: tuple = (0.01, 0.03, 0.05, 0.1)
    c_r_grid: tuple = (0.01, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5)
    methods: tuple = METHODS
    trials: int = 500
    seed: int = 0
    window_length: int = 201
    kaiser_beta: float = 10.0
    n_iter_greedy: int = 8
    n_iter_hades: int = 3
    fig1_snr: float = 0.0
    noise_power: float = 1.0

    def __post_init__(self):
        for name in ("delays", "snr_grid", "pfa_grid", "c_r_grid", "methods"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        object.__setattr__(self, "delays", tuple(int(d) for d in self.delays))
        if self.trials < 1:
            raise ConfigurationError("trials must be at least 1")
        for name in ("snr_grid", "pfa_grid", "c_r_grid", "methods"):
            if not getattr(self, name):
                raise ConfigurationError(f"{name} must not be empty")
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ConfigurationError(f"unknown methods: {', '.join(unknown)}")
        if any(not 0 < p < 1 for p in self.pfa_grid):
            raise ConfigurationError("pfa values must lie in (0, 1)")
        if self.n_iter_greedy < 1 or self.n_iter_hades < 1:
            raise ConfigurationError("iteration counts must be at least 1")
        if self.c_r not in self.c_r_grid:
            object.__setattr__(self, "c_r_grid", tuple(sorted(self.c_r_grid + (self.c_r,))))
        # validates n, m, delays and every c_r
        for c_r in self.c_r_grid:
            SensingConfig(self.n, self.m, self.delays, c_r)
        self.model()
        if self.n % self.n_sym:
            raise ConfigurationError(f"n={self.n} must be a multiple of n_sym={self.n_sym}")
        if self.m < self.n_sym:
            raise ConfigurationError("m must cover at least one symbol")

    def model(self) -> SignalModel:
        return SignalModel(self.n_sym, sigma_a2=self.sigma_a2)

    def sensing(self, c_r: float | None = None) -> SensingConfig:
        return SensingConfig(self.n, self.m, self.delays, self.c_r if c_r is None else c_r)

    @property
    def classic_size(self) -> int:
        """CA size of the classical estimator at the matched budget (whole symbols only)."""
        return (self.m // self.n_sym) * self.n_sym

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


PROFILES = {
    "full": ExperimentPlan(),
    "fast": ExperimentPlan(n=1000, m=250),
}

_LIST_KEYS = {"delays": int, "snr_grid": float, "pfa_grid": float, "c_r_grid": float, "methods": str}
_SCALAR_KEYS = {
    "n": int, "m": int, "n_sym": int, "sigma_a2": float, "c_r": float, "trials": int,
    "seed": int, "window_length": int, "kaiser_beta": float, "n_iter_greedy": int,
    "n_iter_hades": int, "fig1_snr": float, "noise_power": float,
}


def _parse_float(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise ValueError("nan is not a valid value")
    return value


def parse_plan(text: str, base: ExperimentPlan | None = None) -> ExperimentPlan:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from exc
    if parser.sections() != ["experiment"]:
        raise ConfigurationError("config must contain exactly one [experiment] section")
    section = parser["experiment"]
    version = section.get("schema_version")
    if version is None:
        raise ConfigurationError("schema_version is required")
    if version.strip() != str(SCHEMA_VERSION):
        raise ConfigurationError(f"unsupported schema_version {version}, expected {SCHEMA_VERSION}")
    values = {}
    for key, raw in section.items():
        if key == "schema_version":
            continue
        if key not in _LIST_KEYS and key not in _SCALAR_KEYS:
            raise ConfigurationError(f"unknown config key '{key}'")
        try:
            if key in _LIST_KEYS:
                cast = _parse_float if _LIST_KEYS[key] is float else _LIST_KEYS[key]
                values[key] = tuple(cast(item.strip()) for item in raw.split(",") if item.strip())
            else:
                cast = _parse_float if _SCALAR_KEYS[key] is float else _SCALAR_KEYS[key]
                values[key] = cast(raw.strip())
        except ValueError as exc:
            raise ConfigurationError(f"bad value for '{key}': {raw!r}") from exc
    return replace(base or ExperimentPlan(), **values)


def load_plan(path, base: ExperimentPlan | None = None) -> ExperimentPlan:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    return parse_plan(text, base)


def dump_plan(plan: ExperimentPlan) -> str:
    lines = ["[experiment]", f"schema_version = {SCHEMA_VERSION}"]
    for key, value in plan.to_dict().items():
        if isinstance(value, list):
            value = ", ".join(str(v) for v in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
