import argparse
import logging
import sys
from pathlib import Path

from utils.config import SCENARIO_DIR, load_settings
from utils.errors import ConfigurationError, OracleMismatch, ScenarioValidationError
from utils.scenario_parser import load_scenario

logger = logging.getLogger("fairauction")

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INVALID = 2


def configure_logging(settings, verbose=False):
    level = logging.DEBUG if verbose else getattr(logging, settings.log_level.upper(), logging.WARNING)
    logging.basicConfig(level=level, format=settings.log_format)


def write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def scenario_paths(target):
    target = Path(target)
    if target.is_dir():
        return sorted(target.glob("*.json"))
    return [target]


def cmd_run(args, settings):
    from agents.orchestrator import ScenarioOrchestrator

    paths = scenario_paths(args.scenario)
    if len(paths) > 1 and args.trace:
        raise ScenarioValidationError("--trace", "a trace file needs a single scenario")
    orchestrator = ScenarioOrchestrator(settings)
    reports = []
    for path in paths:
        scenario = load_scenario(path)
        trace, report = orchestrator.run(scenario)
        reports.append(report)
        print(report.summary())
        print()
        if args.trace:
            write_text(args.trace, "\n".join(trace.lines()) + "\n")

    if args.report:
        write_text(args.report, "".join(r.to_lines() for r in reports))
    failed = [r.scenario for r in reports if not r.ok]
    if failed:
        print(f"violations in: {', '.join(failed)}")
        return EXIT_VIOLATION
    return EXIT_OK


def cmd_verify(args, settings):
    from agents.oracle import verify_outcome
    from agents.orchestrator import ScenarioOrchestrator

    status = EXIT_OK
    orchestrator = ScenarioOrchestrator(settings)
    for path in scenario_paths(args.scenario):
        scenario = load_scenario(path)
        orchestrator.execute(scenario)
        session = orchestrator.last_run.session
        if session.outcome is None:
            print(f"{scenario.name}: auction never ran, nothing to verify")
            continue
        bids = {addr: session.commitments[addr].opened_bid for addr in session.outcome.order}
        try:
            result = verify_outcome(session.outcome, bids, scenario.provider.supply, settings)
        except OracleMismatch as exc:
            print(f"{scenario.name}: MISMATCH {exc}")
            status = EXIT_VIOLATION
            continue
        print(f"{scenario.name}: engine matches oracle on {result['bids']} bids, "
              f"{result['winners']} winners, revenue {result['revenue']}")
    return status


def cmd_fuzz(args, settings):
    from agents.oracle import fuzz

    failures = fuzz(args.seed, args.count, settings, max_users=args.max_users, max_types=args.max_types)
    print(f"fuzz seed={args.seed}: {args.count - len(failures)}/{args.count} instances agree")
    for failure in failures[:10]:
        print(f"  instance {failure['instance']}: {failure['error']}")
    return EXIT_VIOLATION if failures else EXIT_OK


def cmd_bench(args, settings):
    from agents.benchmark import run_benchmark

    users = range(args.min_users, args.max_users + 1, args.step)
    types = [int(t) for t in args.types.split(",")]
    frame = run_benchmark(users, types, repeat=args.repeat, seed=args.seed, settings=settings)
    print(frame.to_string(index=False, float_format=lambda v: f"{v * 1000:.2f}ms"))
    if args.out:
        write_text(args.out, frame.to_json(orient="records", lines=True))
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="fairauction", description="Fair VM auction protocol simulator")
    parser.add_argument("--verbose", "-v", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute a scenario file (or every file in a directory)")
    run.add_argument("scenario", nargs="?", default=str(SCENARIO_DIR))
    run.add_argument("--trace", help="write the JSON Lines event trace here")
    run.add_argument("--report", help="write the JSON Lines fairness report here")
    run.set_defaults(func=cmd_run)

    verify = sub.add_parser("verify", help="cross-check the engine against the reference oracle")
    verify.add_argument("scenario", nargs="?", default=str(SCENARIO_DIR))
    verify.set_defaults(func=cmd_verify)

    fz = sub.add_parser("fuzz", help="random small auctions through oracle equivalence")
    fz.add_argument("--seed", type=int, default=0)
    fz.add_argument("--count", type=int, default=200)
    fz.add_argument("--max-users", type=int, default=5)
    fz.add_argument("--max-types", type=int, default=2)
    fz.set_defaults(func=cmd_fuzz)

    bench = sub.add_parser("bench", help="time honest runs over users x VM types")
    bench.add_argument("--min-users", type=int, default=5)
    bench.add_argument("--max-users", type=int, default=20)
    bench.add_argument("--step", type=int, default=5)
    bench.add_argument("--types", default="5,7,9")
    bench.add_argument("--repeat", type=int, default=3)
    bench.add_argument("--seed", type=int, default=0)
    bench.add_argument("--out", help="write the result table as JSON Lines")
    bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        settings = load_settings()
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    configure_logging(settings, args.verbose)
    try:
        return args.func(args, settings)
    except ScenarioValidationError as exc:
        print(f"invalid scenario: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
