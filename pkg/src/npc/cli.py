"""Command line entry point.

    npc run --scenario FILE --out DIR [--level K]
    npc check NAME --scenario FILE [--level K]
    npc refine --levels K [--scenario FILE] [--out DIR]
    npc report --format json|csv [--input DIR]
    npc scenarios --out DIR
    npc calibrate [--out FILE]

The exit status is 0 exactly when every hard gate (exact or precondition)
passes.  ``NPC_THREADS`` caps the number of worker threads.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from pathlib import Path

from .energy import energy_density
from .report import CheckReport
from .scenario import CHECKS, Scenario, refine, run_checks, standard_scenarios, write_calibration
from .verifier import interior_subset, liouville_experiment

log = logging.getLogger("npc")

REPORTS_FILE = "reports.json"


def _hard_ok(reports: list[CheckReport]) -> bool:
    return all(r.passed for r in reports if r.hard)


def _print_reports(reports: list[CheckReport]) -> None:
    for r in reports:
        print(r.summary())


def _load(path: str | None, name: str | None = None) -> Scenario:
    if path:
        return Scenario.load(path)
    suite = standard_scenarios()
    if name not in suite:
        raise SystemExit(f"unknown scenario {name!r}; choose from {sorted(suite)} or pass --scenario")
    return suite[name]


def cmd_run(args: argparse.Namespace) -> int:
    sc = _load(args.scenario, args.name)
    built, res, reports = run_checks(sc, args.level)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "scenario.json").write_text(sc.to_json(indent=2))
    (out / "problem.json").write_text(built.problem(sc.params).to_json())
    (out / "result.json").write_text(res.to_json(built.space))
    (out / REPORTS_FILE).write_text(json.dumps([r.to_dict() for r in reports], indent=2))
    try:
        prof = energy_density(built.graph, built.space, res.u, interior_subset(built.graph, built.region))
        (out / "energy_profile.csv").write_text(prof.to_csv())
    except ValueError as exc:  # mesh too coarse for three scales
        log.warning("energy profile skipped: %s", exc)
    _print_reports(reports)
    return 0 if _hard_ok(reports) else 1


def cmd_check(args: argparse.Namespace) -> int:
    if args.name == "liouville":
        reports = [liouville_experiment()]
    else:
        if args.name not in CHECKS and args.name != "solve":
            raise SystemExit(f"unknown check {args.name!r}; choose from {sorted(CHECKS) + ['liouville', 'solve']}")
        sc = _load(args.scenario, args.scenario_name)
        only = [] if args.name == "solve" else [args.name]
        _, _, reports = run_checks(sc, args.level, only)
    _print_reports(reports)
    if args.json:
        print(json.dumps([r.to_dict() for r in reports], indent=2))
    return 0 if _hard_ok(reports) else 1


def cmd_refine(args: argparse.Namespace) -> int:
    scenarios = [Scenario.load(args.scenario)] if args.scenario else list(standard_scenarios().values())
    ok = True
    out = Path(args.out) if args.out else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
    for sc in scenarios:
        study = refine(sc, args.levels)
        hard = study.hard_reports()
        ok &= _hard_ok(hard)
        print(f"# {sc.name}")
        print(study.to_csv(), end="")
        for r in hard:
            if r.name.endswith(("_stability", "_trend")) or not r.passed:
                print(r.summary())
        if out:
            (out / f"{sc.name}.csv").write_text(study.to_csv())
            (out / f"{sc.name}.json").write_text(json.dumps(study.to_dict(), indent=2))
    return 0 if ok else 1


def reports_to_csv(reports: list[CheckReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "gate", "passed", "max_violation", "tolerance", "notes"])
    for r in reports:
        w.writerow([r.name, r.gate, int(r.passed), repr(float(r.max_violation)), repr(float(r.tolerance)), r.notes])
    return buf.getvalue()


def cmd_report(args: argparse.Namespace) -> int:
    path = Path(args.input)
    if path.is_dir():
        path = path / REPORTS_FILE
    reports = [CheckReport.from_dict(d) for d in json.loads(path.read_text())]
    if args.format == "json":
        print(json.dumps([r.to_dict() for r in reports], indent=2))
    else:
        print(reports_to_csv(reports), end="")
    return 0 if _hard_ok(reports) else 1


def cmd_scenarios(args: argparse.Namespace) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, sc in standard_scenarios().items():
        (out / f"{name}.json").write_text(sc.to_json(indent=2))
        print(out / f"{name}.json")
    return 0


def cmd_calibrate(args: argparse.Namespace) -> int:
    print(write_calibration(args.out))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="npc", description="Discrete harmonic maps into NPC targets and their checks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="solve a scenario, run its checks and write all outputs")
    r.add_argument("--scenario", help="scenario JSON file")
    r.add_argument("--name", help="standard scenario name (when no file is given)")
    r.add_argument("--out", required=True)
    r.add_argument("--level", type=int, default=0)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("check", help="run one named check")
    c.add_argument("name")
    c.add_argument("--scenario", help="scenario JSON file")
    c.add_argument("--scenario-name", help="standard scenario name (when no file is given)")
    c.add_argument("--level", type=int, default=0)
    c.add_argument("--json", action="store_true", help="also print the full reports as JSON")
    c.set_defaults(func=cmd_check)

    f = sub.add_parser("refine", help="refinement study over mesh levels")
    f.add_argument("--levels", type=int, required=True)
    f.add_argument("--scenario", help="scenario JSON file (default: the standard suite)")
    f.add_argument("--out")
    f.set_defaults(func=cmd_refine)

    e = sub.add_parser("report", help="re-emit saved reports")
    e.add_argument("--format", choices=("json", "csv"), default="json")
    e.add_argument("--input", default=".", help="run directory or reports.json")
    e.set_defaults(func=cmd_report)

    s = sub.add_parser("scenarios", help="write the standard scenarios as JSON files")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_scenarios)

    k = sub.add_parser("calibrate", help="refit and freeze the empirical constants")
    k.add_argument("--out")
    k.set_defaults(func=cmd_calibrate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
