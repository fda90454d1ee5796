"""Command line front end.

Verbs: validate (check a config against the rule's assumptions), bounds
(emit the analysis constants without simulating), run (simulate and persist
trajectories), montecarlo (replicate runs and check the bound empirically),
plotdata (post-process a result directory into a plotting table).

Exit codes: 0 success, 2 configuration or schema error, 3 assumption
validation failure (overridable with --waive for run and montecarlo),
4 runtime numerical error.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

from .bounds import BoundReport
from .config import ConfigError, output_directory, parse_config
from .persist import (
    dump_json,
    emit_plot_data,
    read_trajectory,
    trajectory_log_from_rows,
    write_plot_data,
    write_results,
)
from .simulate import (
    AssumptionError,
    ExperimentConfig,
    OracleConvergenceError,
    bound_report_for_config,
    monte_carlo_validate,
    run_experiment,
    validate_config,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTIONS = 3
EXIT_NUMERICAL = 4


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sociallearn",
        description="Simulate distributed belief updates and audit their convergence bounds.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="path to a JSON configuration")
    common.add_argument("--seed", type=int, default=None, help="override the configured seed")
    common.add_argument("--out", type=Path, default=None, help="output directory")
    common.add_argument("--stride", type=int, default=None, help="override the logging stride")
    common.add_argument("--waive", action="store_true", help="proceed despite assumption failures")
    common.add_argument("--quiet", action="store_true", help="suppress progress output")
    verbs = parser.add_subparsers(dest="verb", required=True)
    verbs.add_parser("validate", parents=[common], help="check the configured assumptions")
    verbs.add_parser("bounds", parents=[common], help="emit the bound constants")
    verbs.add_parser("run", parents=[common], help="simulate and persist trajectories")
    verbs.add_parser("montecarlo", parents=[common], help="replicate runs against the bound")
    verbs.add_parser("plotdata", parents=[common], help="tabulate logged beliefs against the bound")
    return parser


def _say(args, message: str) -> None:
    if not args.quiet:
        print(message)


def _load(args) -> ExperimentConfig:
    if args.config is None:
        raise ConfigError("--config is required for this verb")
    if not Path(args.config).exists():
        raise ConfigError(f"configuration file {args.config} does not exist")
    config = parse_config(Path(args.config))
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.stride is not None:
        overrides["stride"] = args.stride
    if args.waive:
        overrides["waive"] = True
    if overrides:
        document = dict(config.document or {})
        run_section = dict(document.get("run", {}))
        run_section.update(overrides)
        document["run"] = run_section
        config = dataclasses.replace(config, document=document, **overrides)
    return config


def _out_dir(args, config: ExperimentConfig) -> Path:
    return args.out if args.out is not None else Path(output_directory(config))


def _cmd_validate(args) -> int:
    config = _load(args)
    try:
        validate_config(config)
    except AssumptionError as err:
        _say(args, f"validation failed: {err}")
        return EXIT_ASSUMPTIONS
    _say(args, "validation passed")
    return EXIT_OK


def _report_or_fail(config: ExperimentConfig) -> BoundReport:
    try:
        return bound_report_for_config(config)
    except ValueError as err:
        raise ConfigError(str(err)) from err


def _cmd_bounds(args) -> int:
    config = _load(args)
    if not config.waive:
        validate_config(config)
    report = _report_or_fail(config)
    text = dump_json(report.to_json_dict())
    out = args.out
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "bounds.json").write_text(text, encoding="utf-8")
        _say(args, f"wrote {out / 'bounds.json'}")
    else:
        print(text, end="")
    return EXIT_OK


def _cmd_run(args) -> int:
    config = _load(args)
    logs = [run_experiment(config, replicate=r) for r in range(config.replicates)]
    report = None
    try:
        report = bound_report_for_config(config)
    except ValueError:
        report = None
    bundle = write_results(_out_dir(args, config), config, logs, report=report)
    _say(args, f"wrote {bundle.trajectory_path}")
    return EXIT_OK


def _cmd_montecarlo(args) -> int:
    config = _load(args)
    if not config.waive:
        validate_config(config)
    report = _report_or_fail(config)
    summary = monte_carlo_validate(config, report)
    bundle = write_results(_out_dir(args, config), config, [], report=report, summary=summary)
    _say(
        args,
        f"violations {summary.violations}/{summary.replicates} "
        f"(frequency {summary.frequency:.4f}, rho {summary.rho}); wrote {bundle.summary_path}",
    )
    return EXIT_OK


def _cmd_plotdata(args) -> int:
    config = _load(args)
    directory = _out_dir(args, config)
    trajectory_path = directory / "trajectory.csv"
    if not trajectory_path.exists():
        raise ConfigError(f"no trajectory at {trajectory_path}; run the 'run' verb first")
    report = _report_or_fail(config)
    rows = read_trajectory(trajectory_path)
    log = trajectory_log_from_rows(rows, replicate=0)
    target = write_plot_data(directory / "plotdata.csv", emit_plot_data(log, report))
    _say(args, f"wrote {target}")
    return EXIT_OK


_COMMANDS = {
    "validate": _cmd_validate,
    "bounds": _cmd_bounds,
    "run": _cmd_run,
    "montecarlo": _cmd_montecarlo,
    "plotdata": _cmd_plotdata,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.verb](args)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except AssumptionError as err:
        print(f"assumption violation: {err}", file=sys.stderr)
        return EXIT_ASSUMPTIONS
    except (ArithmeticError, OracleConvergenceError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
