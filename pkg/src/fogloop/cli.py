"""Command-line front end: validate scenarios, run them to disk, and compare
placement or control-mode variants side by side.

Exit codes: 0 ok, 1 validation failure, 2 input error, 3 output error.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field

from fogloop.errors import ConfigError
from fogloop.metrics import RunMetrics, compute_metrics, metrics_csv, summary_text
from fogloop.runtime import RunResult, run_scenario
from fogloop.scenario import (
    Scenario,
    load_scenario,
    parse_scenario,
    validate_scenario,
    with_mode,
    with_offering,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_INPUT = 2
EXIT_OUTPUT = 3

FORMATS = ("jsonl", "csv", "txt")
OFFERING_VARIANTS = ("mapeaas", "apaas_split")
MODE_VARIANTS = ("centralized", "decentralized")
DEFAULT_OUT = "fogloop-out"


@dataclass
class RunConfig:
    scenario_path: str
    seed: int
    horizon: int
    mode: str | None = None
    out_dir: str | None = None
    formats: tuple[str, ...] = FORMATS

    def __post_init__(self) -> None:
        if self.horizon <= 0:
            raise ConfigError("horizon must be positive")


def _fail(code: int, message: str) -> int:
    print(message, file=sys.stderr)
    return code


def _load(path: str) -> Scenario:
    return load_scenario(path)


def _checked(scenario: Scenario) -> list[str]:
    return validate_scenario(scenario).lines()


def _default_out(explicit: str | None) -> str:
    if explicit is not None:
        return explicit
    return os.environ.get("FOGLOOP_OUT", DEFAULT_OUT)


def cmd_validate(path: str) -> int:
    try:
        scenario = _load(path)
    except ConfigError as exc:
        return _fail(EXIT_INPUT, str(exc))
    violations = _checked(scenario)
    if violations:
        for line in violations:
            print(line)
        return EXIT_VALIDATION
    print(f"ok: {scenario.name} ({scenario.digest})")
    return EXIT_OK


def _prepare(path: str, mode: str | None) -> Scenario:
    """Load, optionally switch control mode, and reparse strictly."""
    scenario = _load(path)
    if mode is not None:
        scenario = parse_scenario(with_mode(scenario.raw, mode))
    return scenario


def cmd_run(config: RunConfig) -> int:
    try:
        scenario = _prepare(config.scenario_path, config.mode)
    except ConfigError as exc:
        return _fail(EXIT_INPUT, str(exc))
    violations = _checked(scenario)
    if violations:
        for line in violations:
            print(line)
        return EXIT_VALIDATION

    result = run_scenario(scenario, config.seed, config.horizon, check=False)
    metrics = compute_metrics(result)
    out_dir = _default_out(config.out_dir)
    try:
        os.makedirs(out_dir, exist_ok=True)
        if "jsonl" in config.formats:
            result.trace.write(os.path.join(out_dir, "trace.jsonl"))
        if "csv" in config.formats:
            with open(os.path.join(out_dir, "metrics.csv"), "w",
                      encoding="utf-8") as fh:
                fh.write(metrics_csv(metrics))
        if "txt" in config.formats:
            with open(os.path.join(out_dir, "summary.txt"), "w",
                      encoding="utf-8") as fh:
                fh.write(summary_text(result, metrics))
    except OSError as exc:
        return _fail(EXIT_OUTPUT, f"cannot write outputs: {exc}")
    print(summary_text(result, metrics), end="")
    return EXIT_OK


@dataclass
class _VariantRow:
    name: str
    result: RunResult
    metrics: RunMetrics = field(init=False)

    def __post_init__(self) -> None:
        self.metrics = compute_metrics(self.result)


def _variant_scenario(base: Scenario, token: str) -> Scenario:
    if token in OFFERING_VARIANTS:
        return parse_scenario(with_offering(base.raw, token))
    if token in MODE_VARIANTS:
        return parse_scenario(with_mode(base.raw, token))
    raise ConfigError(
        f"unknown variant '{token}': choose from "
        f"{', '.join(OFFERING_VARIANTS + MODE_VARIANTS)}"
    )


def cmd_compare(path: str, variants: list[str], seed: int, horizon: int) -> int:
    try:
        base = _load(path)
        prepared = [(token, _variant_scenario(base, token)) for token in variants]
    except ConfigError as exc:
        return _fail(EXIT_INPUT, str(exc))
    for token, scenario in prepared:
        violations = _checked(scenario)
        if violations:
            for line in violations:
                print(f"{token}: {line}")
            return EXIT_VALIDATION

    env_times = {
        token: [event.t for event in scenario.environment_events]
        for token, scenario in prepared
    }
    if len({tuple(times) for times in env_times.values()}) > 1:
        return _fail(EXIT_INPUT, "variants disagree on environment event times")

    rows = [
        _VariantRow(token, run_scenario(scenario, seed, horizon, check=False))
        for token, scenario in prepared
    ]
    header = f"{'variant':<16} {'mean_latency_ms':>16} {'fog_to_cloud':>13} {'total_kwh':>14}"
    print(header)
    for row in rows:
        mean = row.metrics.latency_mean
        mean_text = "n/a" if mean is None else f"{mean:.3f}"
        print(f"{row.name:<16} {mean_text:>16} "
              f"{row.metrics.fog_to_cloud:>13} {row.metrics.total_kwh:>14.9f}")
    return EXIT_OK


def _non_negative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be non-negative")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _formats(text: str) -> tuple[str, ...]:
    chosen = tuple(part.strip() for part in text.split(",") if part.strip())
    unknown = [part for part in chosen if part not in FORMATS]
    if unknown:
        raise argparse.ArgumentTypeError(
            f"unknown formats {unknown}: choose from {', '.join(FORMATS)}"
        )
    return chosen


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fogloop",
        description="Deterministic simulator for fog-hosted IoT control loops.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_validate = sub.add_parser("validate", help="check a scenario file")
    p_validate.add_argument("path")

    p_run = sub.add_parser("run", help="simulate a scenario and write artifacts")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--seed", required=True, type=_non_negative)
    p_run.add_argument("--until-ms", required=True, type=_positive)
    p_run.add_argument("--mode", choices=MODE_VARIANTS)
    p_run.add_argument("--out")
    p_run.add_argument("--format", type=_formats, default=FORMATS)

    p_compare = sub.add_parser("compare", help="run variants on equal seeds")
    p_compare.add_argument("--scenario", required=True)
    p_compare.add_argument("--variants", required=True)
    p_compare.add_argument("--seed", required=True, type=_non_negative)
    p_compare.add_argument("--until-ms", required=True, type=_positive)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        return cmd_validate(args.path)
    if args.command == "run":
        config = RunConfig(
            scenario_path=args.scenario,
            seed=args.seed,
            horizon=args.until_ms,
            mode=args.mode,
            out_dir=args.out,
            formats=args.format,
        )
        return cmd_run(config)
    variants = [part.strip() for part in args.variants.split(",") if part.strip()]
    if not variants:
        return _fail(EXIT_INPUT, "no variants given")
    return cmd_compare(args.scenario, variants, args.seed, args.until_ms)


if __name__ == "__main__":
    sys.exit(main())
