"""Command-line entry points.

Subcommands: run-experiment (sweep to a JSON-lines record file), validate
(Monte Carlo coverage check against a true-risk oracle), emit-plot (record
aggregation to CSV), invert-kl (kl upper inversion utility).  Exit codes:
0 success, 2 configuration error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict

from .config import ConfigError, load_config
from .data import persist_records, load_records
from .experiment import run_sweep, validate_bounds, write_plot_csv
from .klcalc import KlInversionConfig, kl_inv_upper

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gibbscert",
        description="Sample hypotheses from Gibbs posteriors and certify their risk.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run-experiment", help="run a seeded certificate sweep")
    run.add_argument("--config", required=True, help="experiment config file")
    run.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    run.add_argument("--out", default="records.jsonl", help="output record file")

    val = sub.add_parser("validate", help="Monte Carlo check of the 1-delta coverage")
    val.add_argument("--config", required=True, help="experiment config file")
    val.add_argument("--trials", type=int, required=True, help="number of trials")
    val.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    val.add_argument("--force-tau", choices=("inf", "zero"),
                     help="debug override of the certified tau")
    val.add_argument("--out", help="optional JSON report path")

    plot = sub.add_parser("emit-plot", help="aggregate records into plot data")
    plot.add_argument("--records", required=True, help="JSON-lines record file")
    plot.add_argument("--group-by", required=True, choices=("alpha", "beta", "family"))
    plot.add_argument("--out", required=True, help="CSV output path")

    inv = sub.add_parser("invert-kl", help="print the kl upper inversion")
    inv.add_argument("--q", type=float, required=True, help="empirical risk in [0, 1]")
    inv.add_argument("--tau", type=float, required=True, help="kl budget, >= 0")
    inv.add_argument("--tolerance", type=float, default=1e-12,
                     help="bisection interval width (default 1e-12 for 9-decimal output)")
    inv.add_argument("--max-iterations", type=int, default=1000)
    return parser


def _cmd_run_experiment(args) -> int:
    cfg = load_config(args.config)
    records, failures = run_sweep(cfg, args.seed)
    for label, message in failures:
        print(f"warning: run {label} failed: {message}", file=sys.stderr)
    if not records:
        print("error: every sweep run failed", file=sys.stderr)
        return EXIT_RUNTIME
    persist_records(records, args.out)
    print(f"wrote {len(records)} records to {args.out}"
          + (f" ({len(failures)} failed runs skipped)" if failures else ""))
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    report = validate_bounds(cfg, args.trials, args.seed, force_tau=args.force_tau)
    for line in report.lines():
        print(line)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "trials": report.trials,
                    "delta": report.delta,
                    "results": [asdict(r) for r in report.results],
                },
                fh,
                indent=2,
            )
    return EXIT_OK


def _cmd_emit_plot(args) -> int:
    records = load_records(args.records)
    write_plot_csv(records, args.group_by, args.out)
    print(f"wrote plot data for {len(records)} records to {args.out}")
    return EXIT_OK


def _cmd_invert_kl(args) -> int:
    cfg = KlInversionConfig(tolerance=args.tolerance, max_iterations=args.max_iterations)
    value = kl_inv_upper(args.q, args.tau, cfg)
    print(f"{value:.9f}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "run-experiment": _cmd_run_experiment,
        "validate": _cmd_validate,
        "emit-plot": _cmd_emit_plot,
        "invert-kl": _cmd_invert_kl,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # Domain errors on CLI arguments behave like configuration errors.
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
