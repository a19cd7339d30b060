"""Command line entry point.

Exit codes: 0 all verdicts PASS, 1 some verdict FAIL, 2 usage or validation
error, 3 contract violation inside a pipeline.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from ctladder.config import ConfigError, build, load
from ctladder.ledger import DEFAULT_FACTOR, Ledger, LedgerError, default_ledger_path, ledger_diff
from ctladder.metric_graph import ContractError, GraphInputError
from ctladder.models import GenerationError
from ctladder.runner import PIPELINES, execute

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_CONTRACT = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ctladder", description="Ladder and Cannon-Thurston modulus experiments.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in PIPELINES:
        s = sub.add_parser(name)
        s.add_argument("--config", help="config file (flat 'section.key = value' text or JSON)")
        s.add_argument("--out", help="output directory (overrides output.dir)")
        s.add_argument("--seed", type=int, help="overrides rng_seed")
        s.add_argument("--jobs", type=int, default=1, help="worker count (rows run in order)")
    led = sub.add_parser("ledger")
    lsub = led.add_subparsers(dest="action", required=True, parser_class=_Parser)
    pr = lsub.add_parser("print")
    pr.add_argument("path", nargs="?", help="ledger file (default: $CTLADDER_LEDGER or the baseline)")
    df = lsub.add_parser("diff")
    df.add_argument("old")
    df.add_argument("new")
    df.add_argument("--factor", type=float, default=DEFAULT_FACTOR, help="regression factor for every class")
    mg = lsub.add_parser("merge")
    mg.add_argument("out")
    mg.add_argument("inputs", nargs="+", help="later files override earlier ones key by key")
    return p


def _ledger(args) -> int:
    if args.action == "print":
        path = Path(args.path) if args.path else default_ledger_path()
        led = Ledger.from_json(path.read_text(encoding="utf-8"))
        for key in sorted(led.entries):
            print(f"{key} {led.entries[key]['value']!r}")
        return EXIT_PASS
    if args.action == "merge":
        merged = Ledger()
        for path in args.inputs:
            merged.entries.update(Ledger.load(path).entries)
        merged.save(args.out)
        print(f"{len(merged.entries)} entries -> {args.out}")
        return EXIT_PASS
    old, new = Ledger.load(args.old), Ledger.load(args.new)
    classes = {e.get("class", "default") for e in list(old.entries.values()) + list(new.entries.values())}
    lines, verdict = ledger_diff(old, new, {c: args.factor for c in classes})
    for line in lines:
        print(line)
    print(verdict)
    return EXIT_PASS if verdict == "PASS" else EXIT_FAIL


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "ledger":
            return _ledger(args)
        if args.jobs < 1:
            raise ConfigError("--jobs: must be at least 1")
        cfg = load(args.config) if args.config else build({})
        if args.seed is not None:
            cfg.rng_seed = args.seed
        out = args.out or cfg.output["dir"]
        report = execute(cfg, args.command, out, args.jobs)
    except (ConfigError, GraphInputError, LedgerError, OSError) as exc:
        print(f"ctladder: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ContractError, GenerationError) as exc:
        print(f"ctladder: contract violation: {exc} (partial outputs flagged in report)", file=sys.stderr)
        return EXIT_CONTRACT
    for name, v in report["verdicts"].items():
        print(f"{name}: {v['verdict']} ({v['invariant']}; {v['data']})")
    print(f"verdict: {report['verdict']}")
    return EXIT_PASS if report["verdict"] == "PASS" else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
