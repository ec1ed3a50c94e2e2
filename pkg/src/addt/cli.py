"""Command-line interface: check, run, sweep, report."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .campaign import DEFAULT_TRIALS, CampaignPlan, run_campaign, worker_count
from .dsl import ScenarioSpec, expand_sweeps, try_parse_scenario
from .faults import FaultSpec
from .report import KNOWN_FORMATS, emit_report
from .trial import TrialOptions

EXIT_OK = 0
EXIT_DIAGNOSTICS = 1
EXIT_IO = 2


def _load_scenario(path: Path) -> tuple[ScenarioSpec | None, int]:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return None, EXIT_IO
    spec, diagnostics = try_parse_scenario(text)
    for diag in diagnostics:
        print(f"{path}:{diag}", file=sys.stderr)
    if spec is None:
        return None, EXIT_DIAGNOSTICS
    return spec, EXIT_OK


def _load_fault_schedule(path: Path) -> tuple[tuple[FaultSpec, ...] | None, int]:
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        print(f"error: cannot read {path}: {exc}", file=sys.stderr)
        return None, EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"error: {path}: invalid JSON: {exc}", file=sys.stderr)
        return None, EXIT_DIAGNOSTICS
    try:
        return tuple(FaultSpec.from_json(entry) for entry in data), EXIT_OK
    except (KeyError, TypeError, ValueError) as exc:
        print(f"error: {path}: invalid fault spec: {exc}", file=sys.stderr)
        return None, EXIT_DIAGNOSTICS


def _options_from_args(args: argparse.Namespace) -> tuple[TrialOptions | None, int]:
    extra = ()
    if args.faults is not None:
        extra, code = _load_fault_schedule(Path(args.faults))
        if extra is None:
            return None, code
    coupling = {"record": "record_only", "delay": "delay_command"}[args.latency_coupling]
    return TrialOptions(latency_coupling=coupling, trace=args.trace,
                        extra_faults=extra), EXIT_OK


def _run_plan(spec: ScenarioSpec, args: argparse.Namespace, allow_sweeps: bool) -> int:
    configs = expand_sweeps(spec)
    if not allow_sweeps and len(configs) > 1:
        print("error: scenario declares sweep axes; use `addt sweep` to run them",
              file=sys.stderr)
        return EXIT_DIAGNOSTICS
    options, code = _options_from_args(args)
    if options is None:
        return code
    plan = CampaignPlan(
        configs=tuple(configs),
        out_dir=Path(args.out),
        trials_per_config=args.trials,
        master_seed=args.seed,
        options=options,
    )
    try:
        rows = run_campaign(plan, progress=not args.quiet)
        emit_report(rows, plan.out_dir)
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    if not args.quiet:
        n_configs = len(plan.configs)
        print(f"{len(rows)} trials across {n_configs} config(s) -> {plan.out_dir}")
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    spec, code = _load_scenario(Path(args.scenario))
    if spec is None:
        return code
    configs = expand_sweeps(spec)
    print(f"ok: {args.scenario}: scenario '{spec.name}', "
          f"{len(spec.agents)} agent(s), {len(spec.sweeps)} sweep axis(es), "
          f"{len(configs)} config(s)")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    spec, code = _load_scenario(Path(args.scenario))
    if spec is None:
        return code
    return _run_plan(spec, args, allow_sweeps=False)


def cmd_sweep(args: argparse.Namespace) -> int:
    spec, code = _load_scenario(Path(args.scenario))
    if spec is None:
        return code
    return _run_plan(spec, args, allow_sweeps=True)


def cmd_report(args: argparse.Namespace) -> int:
    records_path = Path(args.results_dir) / "records.jsonl"
    if not records_path.exists():
        print(f"error: no records found at {records_path}", file=sys.stderr)
        return EXIT_IO
    try:
        rows = [json.loads(line) for line in
                records_path.read_text(encoding="utf-8").splitlines() if line.strip()]
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot load records: {exc}", file=sys.stderr)
        return EXIT_IO
    if not rows:
        print("error: records file is empty", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    rows.sort(key=lambda r: (r["config_id"], r["trial_index"]))
    formats = tuple(args.format.split(",")) if args.format else KNOWN_FORMATS
    try:
        written = emit_report(rows, Path(args.results_dir), formats)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return EXIT_IO
    for kind, path in written.items():
        print(f"{kind}: {path}")
    return EXIT_OK


def _add_run_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("scenario", help="scenario file (.adt)")
    parser.add_argument("--trials", type=int, default=DEFAULT_TRIALS,
                        help=f"trials per config (default {DEFAULT_TRIALS})")
    parser.add_argument("--seed", type=int, default=0, help="campaign master seed")
    parser.add_argument("--out", default="addt-results", help="output directory")
    parser.add_argument("--trace", action="store_true",
                        help="dump a per-tick CSV trace for every trial")
    parser.add_argument("--faults", default=None,
                        help="JSON fault schedule to replay in every trial")
    parser.add_argument("--latency-coupling", choices=("record", "delay"),
                        default="record",
                        help="record latency only, or delay late commands")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="addt",
        description="Closed-loop driving simulator with fault injection campaigns. "
                    f"Worker count honors ADDT_THREADS (currently {worker_count()}).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_check = sub.add_parser("check", help="parse and validate a scenario file")
    p_check.add_argument("scenario")
    p_check.set_defaults(func=cmd_check)

    p_run = sub.add_parser("run", help="run one sweep-free scenario")
    _add_run_args(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="expand sweep axes and run every config")
    _add_run_args(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_report = sub.add_parser("report", help="regenerate reports from campaign records")
    p_report.add_argument("results_dir")
    p_report.add_argument("--format", default=None,
                          help="comma-separated subset of csv,json,markdown (default all)")
    p_report.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
