"""Command-line entry point: ``recover sweep | once | selftest``."""
from __future__ import annotations

import argparse
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import harness, selftest
from .harness import ALGORITHMS, ConfigError, Decoder, MetricsRow
from .model import write_matrix, write_vector

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_NUMERICAL = 2


class _Parser(argparse.ArgumentParser):
    """Usage errors are configuration errors; exit code 2 is reserved for numerical failure."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _parser() -> argparse.ArgumentParser:
    p = _Parser(prog="recover", description="Sparse recovery by sampled-message BP.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sw = sub.add_parser("sweep", help="Monte-Carlo SNR sweep, CSV to --out, the config's output or stdout")
    sw.add_argument("--config", required=True, help="flat key = value file")
    sw.add_argument("--out", help="overrides the config's output path")

    once = sub.add_parser("once", help="one trial of one algorithm")
    once.add_argument("--snr", required=True, type=float, help="target SNR in dB (inf for noiseless)")
    once.add_argument("--algo", required=True, choices=ALGORITHMS)
    once.add_argument("--seed", required=True, type=int)
    once.add_argument("--config", help="start from this config instead of the desk preset")
    once.add_argument("--preset", choices=sorted(harness.PRESETS), default="desk")
    once.add_argument("--dump-marginal", type=int, metavar="I",
                      help="write variable I's marginal after every iteration")
    once.add_argument("--dump-path", default=None, help="CSV path for --dump-marginal")
    once.add_argument("--save-instance", metavar="DIR",
                      help="write matrix.txt, x0.txt and z.txt for this trial")
    once.add_argument("--export-references", metavar="PATH", help="write the BHT reference functions")

    st = sub.add_parser("selftest", help="fast paths against slow reference implementations")
    st.add_argument("--full", action="store_true", help="full-size checks (slower)")
    return p


def _print_rows(rows: list[MetricsRow]) -> None:
    sys.stdout.write(harness.format_csv(rows))


def _cmd_sweep(args) -> int:
    config = harness.load_config(args.config)
    if args.out:
        config = replace(config, output=args.out)
    rows = harness.run_sweep(config)
    if not config.output:
        _print_rows(rows)
    failed = sum(r.failures for r in rows)
    if failed:
        print(f"{failed} trial(s) failed numerically and were excluded", file=sys.stderr)
    return EXIT_NUMERICAL if any(r.trials == 0 for r in rows) else EXIT_OK


def _cmd_once(args) -> int:
    base = harness.load_config(args.config) if args.config else harness.PRESETS[args.preset]
    if not 0 <= args.seed < 2**64:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    config = replace(base, seed=args.seed, trials=1, snr_points=(args.snr,), algorithms=(args.algo,))
    decoder = Decoder(config)
    inst = harness.make_instance(config, args.snr, 0)

    if args.save_instance:
        out = Path(args.save_instance)
        out.mkdir(parents=True, exist_ok=True)
        write_matrix(inst.matrix, out / "matrix.txt")
        write_vector(inst.signal.values, out / "x0.txt")
        write_vector(inst.z, out / "z.txt")
    if args.export_references:
        if decoder.references is None:
            raise ConfigError("reference functions need 0 < q < 1")
        decoder.references.to_csv(args.export_references)

    marginals = None
    if args.dump_marginal is not None:
        i = args.dump_marginal
        if not 0 <= i < config.n:
            raise ConfigError(f"--dump-marginal must lie in [0, {config.n})")
        if args.algo == "Oracle":
            raise ConfigError("the oracle runs no BP; nothing to dump")
        path = args.dump_path or f"marginal_{i}.csv"
        noise_aware = {"CS-BP": False, "CS-BP-NS": True}.get(args.algo, config.noise_aware)
        with open(path, "w", newline="\n") as fh:
            fh.write("iteration,value,mass\n")

            def trace(it, state):
                for v, w in zip(decoder.grid.values, state.marginals[i]):
                    fh.write(f"{it},{float(v)!r},{float(w)!r}\n")

            marginals = decoder.marginals(inst, noise_aware=noise_aware, trace=trace)

    if args.algo == "BHT-BP":
        res = harness.recover_bht_bp(inst, config, decoder, marginals)
    elif args.algo == "CS-BP":
        res = harness.recover_csbp(inst, config, False, decoder, marginals)
    elif args.algo == "CS-BP-NS":
        res = harness.recover_csbp(inst, config, True, decoder, marginals)
    elif args.algo == "MAP-floor-baseline":
        res = harness.recover_map_dd(inst, config, decoder, marginals)
    else:
        res = harness.recover_oracle(inst, config)
    if not (math.isfinite(res.nmse) and np.all(np.isfinite(res.x_hat))):
        print("non-finite estimate", file=sys.stderr)
        return EXIT_NUMERICAL
    _print_rows([MetricsRow(args.algo, args.snr, 1, res.ser, res.nmse)])
    return EXIT_OK


def _cmd_selftest(args) -> int:
    results = selftest.run_all(quick=not args.full)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed for r in results) else EXIT_NUMERICAL


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handler = {"sweep": _cmd_sweep, "once": _cmd_once, "selftest": _cmd_selftest}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
