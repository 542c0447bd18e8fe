"""Command-line entry point.

::

    risalloc su --trials 1000 --seed 1 --out su.csv
    risalloc mu --config cell.yaml --trials 200 --format json --out mu.json
    risalloc validate --config cell.yaml

Exit codes: 0 success, 1 bad arguments, 2 config error, 3 runtime failure.
The worker count defaults to ``$RISALLOC_WORKERS`` (or 1) and never
changes the output.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from .harness import resolve_workers, run_multi_user, run_single_user
from .scenario import ConfigError, ScenarioConfig, dump_config, load_config

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
DEFAULT_TRIALS = {"su": 1000, "mu": 200}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="risalloc", description="RIS-assisted downlink resource allocation experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name, help_text in (("su", "single-user SNR experiment"),
                            ("mu", "multiuser geometric-mean SINR experiment")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=Path, help="flat YAML scenario file (defaults apply to absent keys)")
        p.add_argument("--trials", type=_positive_int, default=None,
                       help=f"Monte Carlo trials (default {DEFAULT_TRIALS[name]})")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", type=Path, help="output file (default stdout)")
        p.add_argument("--format", choices=("csv", "json"), default=None,
                       help="output format (default from --out suffix, else csv)")
        p.add_argument("--workers", type=_positive_int, default=None)
    p = sub.add_parser("validate", help="print the effective config and exit")
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path)
    return parser


def format_records(records, fmt: str) -> str:
    """Serialize ``(method, trial, metric_db)`` rows sorted by method then trial."""
    rows = sorted(records, key=lambda r: (r[0], r[1]))
    if fmt == "json":
        payload = [{"method": m, "trial": t, "metric_db": v} for m, t, v in rows]
        return json.dumps(payload, indent=1) + "\n"
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["method", "trial", "metric_db"])
    for m, t, v in rows:
        writer.writerow([m, t, repr(float(v))])
    return buf.getvalue()


def _emit(text: str, out: Path | None):
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"risalloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_OK

    try:
        cfg = load_config(args.config) if args.config is not None else ScenarioConfig()
    except ConfigError as exc:
        print(f"risalloc: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "validate":
            _emit(dump_config(cfg), args.out)
            return EXIT_OK
        workers = resolve_workers(args.workers)
        trials = args.trials or DEFAULT_TRIALS[args.command]
        fmt = args.format
        if fmt is None:
            fmt = "json" if args.out is not None and args.out.suffix == ".json" else "csv"
        run = run_single_user if args.command == "su" else run_multi_user
        result = run(cfg, trials, seed=args.seed, workers=workers)
        records = [(r.method_id.value, r.trial_index, r.metric) for r in result.trials]
        _emit(format_records(records, fmt), args.out)
    except Exception as exc:
        print(f"risalloc: failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
