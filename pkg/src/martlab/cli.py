"""Command-line entry point: ``martlab run|verify|simulate|probe|report``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from martlab.runner import (
    OVERRIDABLE,
    parse_overrides,
    run_scenario,
    write_paths,
    write_report,
    write_tables,
)
from martlab.scenario import ScenarioError, load_scenario
from martlab.space import NormedSpace
from martlab.verify import probe_umd_lower_bound

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3


def _space_arg(text: str) -> NormedSpace:
    try:
        q, d = text.split(",")
        q = math.inf if q.strip().lower() in ("inf", "infinity") else float(q)
        return NormedSpace(int(d), q)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'q,d' such as '2,4' or 'inf,8', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="martlab", description="Martingale decomposition laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_cmd(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("scenario", type=Path, help="scenario YAML file")
        p.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        p.add_argument("--out", type=Path, default=None, help="output directory (default: scenario output.dir)")
        return p

    for name, text in (("run", "run all analyses and write the report, tables and sample paths"),
                       ("verify", "run all analyses and write report.json only")):
        p = scenario_cmd(name, text)
        p.add_argument("--jobs", type=int, default=1, help="worker processes for independent analyses")
        p.add_argument("--unsafe-bound", action="append", default=[], metavar="NAME=VALUE",
                       help=f"replace a checked constant, for testing failure paths ({', '.join(OVERRIDABLE)})")

    p = scenario_cmd("simulate", "write sample paths as CSV")
    p.add_argument("--paths", type=int, default=None, help="number of paths (default: output.csv_paths or 1)")

    p = sub.add_parser("probe", help="lower-bound the UMD constant of l^q_d")
    p.add_argument("--space", type=_space_arg, required=True, help="q,d for example inf,4")
    p.add_argument("--depth", type=int, required=True)
    p.add_argument("--budget", type=int, required=True, help="number of objective evaluations")
    p.add_argument("--p", type=float, default=2.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("report", help="summarize a report.json")
    p.add_argument("path", type=Path, help="report.json or the directory holding it")
    p.add_argument("--failures", action="store_true", help="only list failing checks")
    return parser


def _print_summary(report: dict, failures_only: bool = False, out=None) -> None:
    out = out or sys.stdout
    print(f"scenario {report['scenario']}  seed {report['reproducibility']['seed']}  "
          f"{'PASS' if report['passed'] else 'FAIL'}", file=out)
    for a in report["analyses"]:
        for rep in a["reports"]:
            for c in rep["checks"]:
                if failures_only and c["passed"]:
                    continue
                flag = "pass" if c["passed"] else "FAIL"
                if c.get("vacuous"):
                    flag += " (vacuous)"
                print(f"  [{a['index']:02d} {a['kind']}] {c['name']}: {c['estimate']} vs {c['bound']} "
                      f"slack {c['slack']} {flag}", file=out)


def _cmd_run(args, tables: bool) -> int:
    try:
        s = load_scenario(args.scenario)
        overrides = parse_overrides(args.unsafe_bound)
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(f"{args.scenario}:{d}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out or Path(s.output.dir)
    result = run_scenario(s, seed=args.seed, jobs=args.jobs, overrides=overrides)
    try:
        write_report(result, out)
        if tables:
            write_tables(result.tables, out)
            write_paths(s, out, s.output.csv_paths, args.seed)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    _print_summary(result.report, failures_only=True)
    print(f"report written to {out / 'report.json'}")
    return result.exit_code


def _cmd_simulate(args) -> int:
    try:
        s = load_scenario(args.scenario)
    except ScenarioError as exc:
        for d in exc.diagnostics:
            print(f"{args.scenario}:{d}", file=sys.stderr)
        return EXIT_CONFIG
    count = args.paths if args.paths is not None else max(1, s.output.csv_paths)
    try:
        written = write_paths(s, args.out or Path(s.output.dir), count, args.seed)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    for p in written:
        print(p)
    return EXIT_OK


def _cmd_probe(args) -> int:
    try:
        res = probe_umd_lower_bound(args.space, args.p, args.depth, args.budget, args.seed)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(res.to_dict(), indent=2))
    return EXIT_OK


def _cmd_report(args) -> int:
    path = args.path / "report.json" if args.path.is_dir() else args.path
    try:
        report = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return EXIT_IO
    _print_summary(report, args.failures)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args, tables=True)
    if args.command == "verify":
        return _cmd_run(args, tables=False)
    if args.command == "simulate":
        return _cmd_simulate(args)
    if args.command == "probe":
        return _cmd_probe(args)
    return _cmd_report(args)


if __name__ == "__main__":
    sys.exit(main())
