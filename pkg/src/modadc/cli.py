"""Command-line entry point: ``modadc simulate|sweep|dump-signal|if-solve``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import harness
from .errors import ConfigError, DivergenceError, IllConditionedError, ModAdcError
from .integer_forcing import if_exhaustive, if_lll

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED = 0, 1, 2


def _load(args):
    cfg = harness.load_config(args.config) if args.config else harness.ExperimentConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "mode", None) is not None:
        overrides["mode"] = args.mode
    if getattr(args, "samples", None) is not None:
        overrides["N"] = args.samples
    return cfg.replace(**overrides).validate()


def cmd_simulate(args):
    cfg = _load(args)
    on_refresh = None
    if args.dump_if:
        def on_refresh(n, ifs):
            print(f"# n={n} r_if={ifs.r_if:.6f} A={ifs.A.tolist()}", file=sys.stderr)
    result = harness.run_experiment(cfg, trace_path=args.trace, on_refresh=on_refresh)
    summary = result.summary.to_dict()
    if args.manifest:
        harness.save_manifest(cfg, result.model, args.manifest)
    if args.json:
        print(json.dumps(summary, sort_keys=True))
    else:
        for key, val in summary.items():
            print(f"{key:>14}: {val}")
    return EXIT_OK


def cmd_sweep(args):
    cfg = _load(args)
    rows = harness.rd_sweep(cfg, csv_path=args.out, workers=args.workers)
    print(harness.format_table(rows), end="")
    return EXIT_OK


def cmd_dump_signal(args):
    cfg = _load(args)
    model = harness.build_model(cfg)
    seed = harness.derive_seed(cfg.seed, "source", cfg.mode, cfg.R, cfg.snr_db)
    harness.emit_signal_dump(model, cfg.N, args.out, seed=seed)
    return EXIT_OK


def cmd_if_solve(args):
    sigma = harness.read_matrix_csv(args.sigma)
    if args.method == "exhaustive":
        ifs = if_exhaustive(sigma, args.bound)
    else:
        ifs = if_lll(sigma, args.lll_delta)
    print("A =")
    for row in ifs.A:
        print("  " + " ".join(f"{int(v):>4d}" for v in row))
    print(f"sigma_max = {ifs.sigma_max:.10g}")
    print(f"R_IF = {ifs.r_if:.10g}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="modadc", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", metavar="PATH", help="TOML experiment config")
        p.add_argument("--seed", type=int, metavar="U64")
        p.add_argument("--mode", choices=harness.MODES)
        p.add_argument("--samples", type=int, metavar="N", help="override number of samples")

    p = sub.add_parser("simulate", help="single run")
    common(p)
    p.add_argument("--trace", metavar="PATH", help="per-step trace CSV")
    p.add_argument("--manifest", metavar="PATH", help="write run manifest JSON (includes gamma)")
    p.add_argument("--dump-if", action="store_true", help="print A and R_IF at each refresh")
    p.add_argument("--json", action="store_true", help="print the summary as JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="rate-distortion grid")
    common(p)
    p.add_argument("--out", metavar="PATH", help="tidy CSV output")
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-signal", help="write raw input samples to CSV")
    common(p)
    p.add_argument("--out", metavar="PATH", required=True)
    p.set_defaults(func=cmd_dump_signal)

    p = sub.add_parser("if-solve", help="IF matrix for a covariance read from CSV")
    p.add_argument("sigma", metavar="SIGMA_CSV")
    p.add_argument("--method", choices=("lll", "exhaustive"), default="lll")
    p.add_argument("--bound", type=int, default=None)
    p.add_argument("--lll-delta", type=float, default=0.99)
    p.add_argument("--config", metavar="PATH", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_if_solve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: decoder diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (ConfigError, IllConditionedError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ModAdcError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
