"""Command line: ``evsdg train``, ``evsdg generate``, ``evsdg validate``.

Exit codes: 0 success, 1 usage error, 2 data or model error.
"""

from __future__ import annotations

import argparse
import io
import json
import sys
from datetime import date

from . import arrival as am
from .core import Horizon, TimeGrid
from .errors import SdgError
from .generator import ArrivalFamily, GenerationConfig, LambdaMode, TrainConfig, fit_sdg, generate_sessions
from .ingest import SKIP_BAD, STRICT, parse_sessions, write_sessions
from .mixture import EmConfig, GLOBAL, MONTH, OWN
from .persist import dumps_model, load_model
from .validate import build_validation_report, validate_arrival_fit

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _iso_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a YYYY-MM-DD date: {text!r}") from None


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not value > 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text!r}")
    return value


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1: {text!r}")
    return value


def _seed(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="evsdg", description="Synthetic EV charging session generator")
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="fit a model from a sessions CSV")
    train.add_argument("--input", required=True, help="sessions CSV")
    train.add_argument("--output", required=True, help="model JSON to write")
    train.add_argument("--slot-minutes", type=_positive_int, default=60)
    train.add_argument("--arrival-model", choices=[f.value for f in ArrivalFamily], default="auto")
    train.add_argument("--lambda-mode", choices=[m.value for m in LambdaMode], default="piecewise")
    train.add_argument("--fourier-order", type=int, default=am.DEFAULT_FOURIER_ORDER)
    train.add_argument("--lambda-min", type=_positive_float, default=am.DEFAULT_LAMBDA_MIN)
    train.add_argument("--lambda-max", type=_positive_float, default=am.DEFAULT_LAMBDA_MAX)
    train.add_argument("--max-components", type=_positive_int, default=8)
    train.add_argument("--min-cell-n", type=_positive_int, default=50)
    train.add_argument("--iat-boundary", choices=[p.value for p in am.BoundaryPolicy], default="restart")
    train.add_argument("--strict", action="store_true", help="abort on the first bad CSV row")
    train.add_argument("--seed", type=_seed, default=0, help="seed for EM initialisation")

    gen = sub.add_parser("generate", help="write synthetic sessions")
    gen.add_argument("--model", required=True)
    gen.add_argument("--from", dest="start", type=_iso_date, required=True, help="first day (inclusive)")
    gen.add_argument("--to", dest="end", type=_iso_date, required=True, help="last day (exclusive)")
    gen.add_argument("--seed", type=_seed, required=True)
    gen.add_argument("--output", help="CSV to write (default: standard output)")

    val = sub.add_parser("validate", help="goodness-of-fit report for sessions against a model")
    val.add_argument("--model", required=True)
    val.add_argument("--input", required=True)
    val.add_argument("--report", help="JSON report to write (default: standard output)")
    val.add_argument("--seed", type=_seed, default=0, help="seed for the synthetic comparison sample")
    val.add_argument("--strict", action="store_true")
    return parser


def _read_sessions(path: str, strict: bool):
    with open(path, "rb") as fh:
        return parse_sessions(fh, STRICT if strict else SKIP_BAD)


def _plan_counts(plan) -> str:
    values = list(plan.values())
    return f"{values.count(OWN)} own fits, {values.count(MONTH)} month-pooled, {values.count(GLOBAL)} global-pooled"


def cmd_train(args, parser) -> int:
    try:
        grid = TimeGrid(args.slot_minutes)
    except ValueError as exc:
        parser.error(str(exc))
    if args.lambda_max <= args.lambda_min:
        parser.error("--lambda-max must exceed --lambda-min")
    if args.fourier_order < 0:
        parser.error("--fourier-order must be >= 0")
    cfg = TrainConfig(
        grid=grid,
        arrival_family=ArrivalFamily(args.arrival_model),
        lambda_mode=LambdaMode(args.lambda_mode),
        fourier_order=args.fourier_order,
        lambda_min=args.lambda_min,
        lambda_max=args.lambda_max,
        iat_boundary=am.BoundaryPolicy(args.iat_boundary),
        em=EmConfig(k_max=args.max_components, min_cell_n=args.min_cell_n),
        seed=args.seed,
    )
    sessions, bad = _read_sessions(args.input, args.strict)
    model, report = fit_sdg(sessions, cfg)
    text = dumps_model(model)
    with open(args.output, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)

    fit = validate_arrival_fit(model.arrival, report.buckets)
    rate = fit.pass_rate(0.05)
    h = report.horizon
    print(f"trained on {len(sessions)} sessions over {h.n_days} days [{h.start} .. {h.end}); {len(bad)} bad rows skipped")
    print(f"grid: {grid.slot_minutes}-minute slots, {grid.slots_per_day} per day")
    print(
        f"arrivals: {cfg.arrival_family.value} model, {cfg.lambda_mode.value} rate, "
        f"{report.n_negbinom_cells} negative-binomial cells"
    )
    print(f"connected time: {_plan_counts(report.connected_plan)}")
    print(f"energy: {_plan_counts(report.energy_plan)}")
    if rate is None:
        print("exponential IAT check: no cell has 2 or more inter-arrival times")
    else:
        passed = round(rate * len(fit.results))
        print(
            f"exponential IAT check: {passed}/{len(fit.results)} cells with p >= 0.05 "
            f"(pass rate {rate:.3f}); {len(fit.omitted)} cells omitted; {len(fit.low_power)} low-power"
        )
    print(f"model written to {args.output}")
    return EXIT_OK


def cmd_generate(args, parser) -> int:
    try:
        horizon = Horizon(args.start, args.end)
    except ValueError as exc:
        parser.error(str(exc))
    with open(args.model, "rb") as fh:
        model = load_model(fh)
    sessions = generate_sessions(model, GenerationConfig(horizon=horizon, seed=args.seed))
    buf = io.StringIO()
    write_sessions(sessions, buf)
    if args.output:
        with open(args.output, "w", encoding="utf-8", newline="") as fh:
            fh.write(buf.getvalue())
        print(f"generated {len(sessions)} sessions")
    else:
        sys.stdout.write(buf.getvalue())
        print(f"generated {len(sessions)} sessions", file=sys.stderr)
    return EXIT_OK


def cmd_validate(args, parser) -> int:
    with open(args.model, "rb") as fh:
        model = load_model(fh)
    sessions, _ = _read_sessions(args.input, args.strict)
    report = build_validation_report(model, sessions, args.seed)
    text = json.dumps(report.to_json(), sort_keys=True, indent=2, allow_nan=False) + "\n"
    if args.report:
        with open(args.report, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


COMMANDS = {"train": cmd_train, "generate": cmd_generate, "validate": cmd_validate}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args, parser)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    except (SdgError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
