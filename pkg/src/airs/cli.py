"""Command-line driver: generate, analyze, plan, loop, paper-example, bench."""
from __future__ import annotations

import argparse
import hashlib
import os
import sys
import time
from dataclasses import replace
from pathlib import Path

from . import worked_example
from .analysis import format_aggregate_lines, format_aggregate_table, run_analysis
from .capture import CaptureFormatError, read_capture, scale_dataset, table_viii_scenario, write_capture
from .config import ConfigError, load_config
from .kb import KBError, bundled_kb, load_kb, save_kb
from .planner import PlanningError, format_plan, select_response
from .signatures import DEFAULT_RULES
from .simenv import ExecutionError, format_metrics, run_mapek_loop

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_ASSERT = 0, 1, 2, 3

DATA_ERRORS = (KBError, CaptureFormatError, ConfigError, PlanningError, ExecutionError, OSError, ValueError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    return int(os.environ.get("AIRS_SEED", "0"))


def _worker_list(value: str) -> list[int]:
    try:
        workers = [int(v) for v in value.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad worker list {value!r}") from None
    if not workers or min(workers) < 1:
        raise argparse.ArgumentTypeError("worker counts must be >= 1")
    return workers


def _positive(value: str) -> int:
    n = int(value)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _rules(kb_path):
    if kb_path is None:
        return DEFAULT_RULES
    return load_kb(kb_path).signatures or DEFAULT_RULES


def cmd_generate(args) -> int:
    seed = _seed(args)
    if args.scenario == "table-viii":
        records = table_viii_scenario(args.packets, seed)
    else:
        records = scale_dataset(args.packets, args.attacks, seed)
    write_capture(records, args.output)
    print(f"wrote {len(records)} records to {args.output}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    records = read_capture(args.capture)
    aggregates = run_analysis(records, _rules(args.kb), args.workers)
    sys.stdout.write(format_aggregate_table(aggregates))
    sys.stdout.write("\n")
    sys.stdout.write(format_aggregate_lines(aggregates))
    return EXIT_OK


def cmd_plan(args) -> int:
    kb = load_kb(args.kb)
    attacks = [a.strip() for a in args.attacks.split(",") if a.strip()]
    sys.stdout.write(format_plan(select_response(kb, attacks)))
    return EXIT_OK


def cmd_loop(args) -> int:
    config = load_config(args.config)
    seed = args.seed if args.seed is not None else int(os.environ.get("AIRS_SEED", config.seed))
    metrics, kb = run_mapek_loop(config.sim, seed, load_kb(config.kb_path), config.rules)
    for m in metrics:
        sys.stdout.write(format_metrics(m, config.sim.tick_seconds))
    out = Path(args.kb_out) if args.kb_out else config.output_dir / "kb_updated.kb"
    out.parent.mkdir(parents=True, exist_ok=True)
    save_kb(kb, out)
    print(f"updated knowledge base written to {out}")
    return EXIT_OK


def cmd_paper_example(args, kb=None) -> int:
    if args.corrupt:
        kb = kb or bundled_kb("table_ii")
        first = kb.profiles[0]
        kb = replace(kb, profiles=(replace(first, probability=1.0 - first.probability), *kb.profiles[1:]))
    report, failures = worked_example.run(kb)
    sys.stdout.write(report)
    if failures:
        for f in failures:
            print(f"MISMATCH {f}", file=sys.stderr)
        return EXIT_ASSERT
    print("all values within 0.001 of the published tables")
    return EXIT_OK


def cmd_bench(args) -> int:
    records = read_capture(args.capture)
    rules = _rules(args.kb)
    print("workers\tseconds\tpackets_per_second\tdigest")
    throughput = {}
    digests = set()
    for n in args.workers:
        start = time.perf_counter()
        aggregates = run_analysis(records, rules, n, processes=n > 1)
        elapsed = time.perf_counter() - start
        digest = hashlib.sha256(format_aggregate_lines(aggregates).encode()).hexdigest()[:16]
        digests.add(digest)
        throughput[n] = len(records) / elapsed if elapsed > 0 else float("inf")
        print(f"{n}\t{elapsed:.3f}\t{throughput[n]:.0f}\t{digest}")
    if len(digests) != 1:
        print("ERROR: aggregate digests differ across worker counts", file=sys.stderr)
        return EXIT_ASSERT
    lo, hi = min(args.workers), max(args.workers)
    if hi > lo and throughput[hi] < throughput[lo]:
        print(f"warning: {hi} workers slower than {lo} (cpu_count={os.cpu_count()})", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="airs", description="Autonomic intrusion response engine")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="write a synthetic capture file")
    p.add_argument("--packets", type=int, default=130_000)
    p.add_argument("--attacks", type=int, default=306)
    p.add_argument("--scenario", choices=("scaled", "table-viii"), default="scaled",
                   help="table-viii: three fixed attackers; --packets sets the legitimate count")
    p.add_argument("--seed", type=int)
    p.add_argument("--output", default="capture.airscap")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("analyze", help="detect and aggregate attacks in a capture file")
    p.add_argument("--capture", required=True)
    p.add_argument("--workers", type=_positive, default=1)
    p.add_argument("--kb", help="take signature rules from this knowledge base")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("plan", help="select a response for detected attacks")
    p.add_argument("--kb", required=True)
    p.add_argument("--attacks", required=True, help="comma-separated attack ids")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("loop", help="run the simulated monitor/analyse/plan/execute loop")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--kb-out")
    p.set_defaults(func=cmd_loop)

    p = sub.add_parser("paper-example", help="reproduce the worked expected-utility example")
    p.add_argument("--corrupt", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_paper_example)

    p = sub.add_parser("bench", help="analysis throughput per worker count")
    p.add_argument("--capture", required=True)
    p.add_argument("--workers", type=_worker_list, default=[1, 2, 4])
    p.add_argument("--kb")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
