"""Command line interface: ``beltrami-lab run|batch|dump-fields``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
from importlib import resources
from pathlib import Path

import scipy.fft as sfft

from .errors import BeltramiLabError, ConfigurationError, ConvergenceError
from .runner import (
    EXIT_CONFIG,
    EXIT_CONVERGENCE,
    EXIT_OK,
    EXIT_VERIFY,
    ScenarioConfig,
    dump_fields,
    emit_report,
    run_scenario,
    write_summary,
)

OUTPUT_ENV = "BELTRAMI_LAB_OUTPUT"
DEFAULT_OUTPUT = "beltrami_output"

log = logging.getLogger("beltrami_lab")


def bundled_scenarios() -> Path:
    """Directory holding the scenario library shipped with the package."""
    return Path(str(resources.files("beltrami_lab") / "scenarios"))


def _output_dir(args, cfg: ScenarioConfig | None = None) -> Path:
    """--output, then the scenario's output.directory, then $BELTRAMI_LAB_OUTPUT."""
    if args.output:
        return Path(args.output)
    if cfg is not None and cfg.output.get("directory"):
        return cfg.base_dir / cfg.output["directory"]
    return Path(os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)


def _load(path, seed) -> ScenarioConfig:
    cfg = ScenarioConfig.load(path)
    return cfg.with_seed(seed) if seed is not None else cfg


def cmd_run(args) -> int:
    try:
        cfg = _load(args.scenario, args.seed)
    except ConfigurationError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    report = run_scenario(cfg)
    out = _output_dir(args, cfg)
    path = emit_report(report, out, "json")
    emit_report(report, out, "csv-summary")
    if cfg.output.get("fields") and report.exit_code != EXIT_CONFIG:
        dump_fields(cfg, out)
    status = "PASS" if report.passed else f"FAIL (exit {report.exit_code})"
    print(f"{cfg.name}: {status} -> {path}")
    if report.error:
        print(f"  error in stage {report.error['stage']}: {report.error['message']}")
    for rule, res in report.acceptance.items():
        if not res["passed"]:
            print(f"  rule {rule}: value {res['value']} {res['op']} {res['threshold']} failed")
    return report.exit_code


def cmd_batch(args) -> int:
    directory = Path(args.directory) if args.directory else bundled_scenarios()
    files = sorted(directory.glob("*.toml"))
    if not files:
        log.error("no scenarios in %s", directory)
        return EXIT_CONFIG
    out = _output_dir(args)
    reports = []
    worst = EXIT_OK
    for path in files:
        try:
            cfg = _load(path, args.seed)
        except ConfigurationError as exc:
            log.error("%s: %s", path.name, exc)
            worst = max(worst, EXIT_CONFIG)
            continue
        report = run_scenario(cfg)
        emit_report(report, out, "json")
        reports.append(report)
        status = "PASS" if report.passed else f"FAIL (exit {report.exit_code})"
        print(f"{cfg.name}: {status}")
        worst = max(worst, report.exit_code)
    write_summary(reports, out / "summary.csv")
    return worst


def cmd_dump(args) -> int:
    try:
        cfg = _load(args.scenario, args.seed)
        paths = dump_fields(cfg, _output_dir(args, cfg))
    except ConfigurationError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        log.error("%s", exc)
        return EXIT_CONVERGENCE
    except BeltramiLabError as exc:
        log.error("%s", exc)
        return EXIT_VERIFY
    for p in paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="beltrami-lab",
        description="Beltrami equation solver and linear-family verification harness.")
    parser.add_argument("--seed", type=int, default=None,
                        help="override every verification seed in the scenario")
    parser.add_argument("--threads", type=int, default=1, help="FFT worker threads")
    parser.add_argument("--output", default=None,
                        help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one scenario")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("batch", help="run every *.toml in a directory")
    p.add_argument("directory", nargs="?", default=None,
                   help="scenario directory (default: bundled library)")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("dump-fields", help="write coefficient and mapping fields as CSV")
    p.add_argument("scenario")
    p.set_defaults(func=cmd_dump)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    with sfft.set_workers(args.threads):
        return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
