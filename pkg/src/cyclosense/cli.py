"""Command line entry point: simulate, detect, sweep, verify.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime failure
(including a failed ``verify``).
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import METHODS, PROFILES, load_plan
from .signals import ConfigurationError, SignalModel, generate_h0, generate_h1

log = logging.getLogger("cyclosense")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _snr(text: str) -> float:
    value = float(text)
    if math.isnan(value):
        raise argparse.ArgumentTypeError("snr must be a number or inf")
    return value


def _delays(text: str) -> tuple:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad delay list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cyclosense", description="Compressive cyclostationary spectrum sensing.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sim = sub.add_parser("simulate", help="write a BPSK (or noise-only) sample block")
    sim.add_argument("--out", required=True, help="output path; .csv writes (index, re, im)")
    sim.add_argument("--n", type=int, default=4000)
    sim.add_argument("--n-sym", type=int, default=8)
    sim.add_argument("--snr", type=_snr, default=0.0, help="dB, 'inf' for noise free")
    sim.add_argument("--noise-only", action="store_true", help="unit-power AWGN instead of signal")
    sim.add_argument("--sample-rate", type=float, default=1.0)
    sim.add_argument("--seed", type=int, default=0)

    det = sub.add_parser("detect", help="run one sensing pipeline on an IQ file, JSON to stdout")
    det.add_argument("--in", dest="path", required=True)
    det.add_argument("--method", choices=METHODS, default="hades-sym")
    det.add_argument("--pfa", type=float, default=0.05)
    det.add_argument("--m", type=int, help="known delay-product rows (default n/4)")
    det.add_argument("--c-r", type=float, default=0.15)
    det.add_argument("--delays", type=_delays, default=(1, 2, 3, 4))
    det.add_argument("--n-sym", type=int, help="symbol length, required by the oracle methods")
    det.add_argument("--window", type=int, default=201)
    det.add_argument("--beta", type=float, default=10.0)
    det.add_argument("--n-iter", type=int, help="greedy iterations (default 8, or 3 for hades)")
    det.add_argument("--seed", type=int, default=0, help="seed of the sampling mask")

    sw = sub.add_parser("sweep", help="run an experiment plan and write one CSV per figure family")
    sw.add_argument("--config", help="experiment config file ([experiment] section)")
    sw.add_argument("--trials", type=int)
    sw.add_argument("--seed", type=int)
    sw.add_argument("--out", default="results")
    sw.add_argument("--fast", action="store_true", help="n=1000, m=250 profile as the base plan")
    sw.add_argument("--workers", type=int, help="worker processes (default CYCLOSENSE_THREADS or cpu count)")

    ver = sub.add_parser("verify", help="run the oracle cross-check suite")
    ver.add_argument("--quick", action="store_true", help="fewer aliasing terms and instances")
    return parser


def cmd_simulate(args) -> int:
    from .fileio import write_iq, write_iq_csv

    rng = np.random.default_rng(args.seed)
    if args.noise_only:
        record = generate_h0(args.n, 1.0, rng)
    else:
        record = generate_h1(SignalModel(args.n_sym), args.n, args.snr, rng)
    out = Path(args.out)
    if out.suffix.lower() == ".csv":
        write_iq_csv(record, out)
    else:
        write_iq(record, out, args.sample_rate)
    print(json.dumps({"path": str(out), "n": record.n, "power": record.power()}))
    return EXIT_OK


def cmd_detect(args) -> int:
    from .caf import SensingConfig, classical_ca, harmonic_rows
    from .detector import SpectralWindow, decide, tdt_statistic
    from .fileio import read_iq
    from .harness import sense

    record, rate = read_iq(args.path)
    n = record.n
    window = SpectralWindow(args.window, args.beta)
    oracle_rows = None
    if args.method in ("classic-oracle", "sober-oracle", "hades-oracle"):
        if args.n_sym is None:
            raise ConfigurationError(f"--n-sym is required for {args.method}")
        oracle_rows = [int(k) for k in harmonic_rows(n, args.n_sym)]
    payload = {"method": args.method, "n": n, "sample_rate": rate}
    if args.method == "classic-oracle":
        ca = classical_ca(record, args.delays)
        res = tdt_statistic(ca, n // args.n_sym, window.fitted(n))
    else:
        m = args.m if args.m is not None else n // 4
        cfg = SensingConfig(n, m, args.delays, args.c_r)
        n_iter = args.n_iter or (3 if args.method.startswith("hades-") else 8)
        res, state = sense(record, args.method, cfg, window, np.random.default_rng(args.seed),
                           n_iter, n_iter, oracle_rows=oracle_rows)
        payload["support"] = [int(k) for k in state.support]
        payload["m"] = m
        payload["c_r"] = args.c_r
    payload.update(decide(res, args.pfa).to_dict())
    print(json.dumps(payload, indent=2))
    return EXIT_OK


def cmd_sweep(args) -> int:
    from .harness import sweep

    base = PROFILES["fast" if args.fast else "full"]
    plan = load_plan(args.config, base) if args.config else base
    overrides = {}
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.seed is not None:
        overrides["seed"] = args.seed
    if overrides:
        plan = dataclasses.replace(plan, **overrides)
    started = time.time()
    manifest = sweep(plan, args.out, workers=args.workers)
    log.info("sweep finished in %.1f s", time.time() - started)
    print(json.dumps({"out": str(args.out), "config_hash": manifest["config_hash"],
                      "failed_trials": manifest["failed_trials"],
                      "files": sorted(f["path"] for f in manifest["files"].values())}))
    return EXIT_OK


def verification_checks(quick: bool = False):
    """(name, ok, detail) for every oracle cross-check."""
    from . import oracles
    from .caf import asymptotic_ca, classical_ca, delay_product, verify_series_identity
    from .detector import SpectralWindow, chi2_threshold, smoothed_cyclic_spectrum
    from .recovery import MeasurementOperator, build_mask, undersample
    from .caf import SensingConfig, delay_product_matrix

    rng = np.random.default_rng(20240601)
    checks = []

    worst = 0.0
    for _ in range(5 if quick else 20):
        x = rng.standard_normal(64) + 1j * rng.standard_normal(64)
        fast, slow = classical_ca(x, (1, 2, 3, 4)).entries, oracles.ca_direct(x, (1, 2, 3, 4))
        worst = max(worst, float(np.max(np.abs(fast - slow)) / np.max(np.abs(slow))))
        for d in (0, 1, 5):
            worst = max(worst, float(np.max(np.abs(delay_product(x, d) - oracles.delay_product_loop(x, d)))))
    checks.append(("classical CA vs direct sum", worst < 1e-9, f"max rel err {worst:.2e}"))

    model = SignalModel(8)
    terms = 20_000 if quick else 1_000_000
    worst = 0.0
    for d in range(5):
        for k in (0, 500, 1000, 1500, 2000, -500):
            worst = max(worst, abs(asymptotic_ca(k, d, model, 4000) - oracles.ca_aliasing_sum(k, 4000, 8, d, terms=terms)))
    checks.append(("asymptotic CA vs aliasing sum", worst < 1e-6, f"max abs err {worst:.2e}"))

    worst = max(verify_series_identity(k, 8) for k in (1, 2, 3))
    checks.append(("alternating series identity", worst < 1e-4, f"max residual {worst:.2e}"))

    worst = 0.0
    for pfa, dof in ((0.05, 8), (0.5, 2), (0.01, 8), (0.1, 4)):
        worst = max(worst, abs(chi2_threshold(pfa, dof) - oracles.chi2_quantile_quadrature(pfa, dof)))
    checks.append(("chi-squared threshold vs quadrature", worst < 1e-6, f"max abs err {worst:.2e}"))

    cfg = SensingConfig(256, 128, (1, 2, 3, 4), 0.15)
    worst = 0.0
    for _ in range(5 if quick else 20):
        x = rng.standard_normal(256) + 1j * rng.standard_normal(256)
        mask = build_mask(cfg, rng)
        p = delay_product_matrix(x, cfg.delays)
        p_u = undersample(p, mask).entries
        worst = max(worst, float(np.max(np.abs(p_u - oracles.gather_loop(p.entries, mask.indices)))))
        via_op = MeasurementOperator(256, mask, cfg.delays).apply(classical_ca(x, cfg.delays))
        worst = max(worst, float(np.max(np.abs(via_op - p_u)) / np.max(np.abs(p_u))))
    checks.append(("measurement operator round trip", worst < 1e-9, f"max rel err {worst:.2e}"))

    c = rng.standard_normal((128, 4)) + 1j * rng.standard_normal((128, 4))
    win = SpectralWindow(21, 10.0)
    worst = 0.0
    for conj in (False, True):
        fast = smoothed_cyclic_spectrum(c, 9, 1, 2, conj, win)
        slow = oracles.smoothed_spectrum_loop(c, 9, 1, 2, conj, win.weights)
        worst = max(worst, abs(fast - slow) / abs(slow))
    checks.append(("smoothed cyclic spectrum vs loop", worst < 1e-12, f"max rel err {worst:.2e}"))
    return checks


def cmd_verify(args) -> int:
    failed = 0
    for name, ok, detail in verification_checks(args.quick):
        print(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
        failed += not ok
    return EXIT_RUNTIME if failed else EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "detect": cmd_detect, "sweep": cmd_sweep, "verify": cmd_verify}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"cyclosense: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:
        log.debug("failure", exc_info=True)
        print(f"cyclosense: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
