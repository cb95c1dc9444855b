"""Command-line frontend for running scenarios and gain sweeps.

Exit codes: 0 success, 1 usage error, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np

from .config import ConfigError, list_fixtures, load_fixture, resolve
from .scenarios import (
    MODEL_FREE_IP,
    Metrics,
    RunResult,
    ScenarioConfig,
    ScenarioError,
    bias_drift_experiment,
    gain_sweep,
    run_scenario,
    shock_recovery,
)

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

BASE_COLUMNS = ("t", "u", "y", "y_ref", "d", "d_forecast")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def csv_columns(variant: str) -> tuple[str, ...]:
    extra = ("F_forecast",) if variant == MODEL_FREE_IP else ()
    return BASE_COLUMNS + extra + ("warmup",)


def write_csv(result: RunResult, out: TextIO) -> None:
    cols = csv_columns(result.variant)
    out.write(",".join(cols) + "\n")
    if len(result) == 0:
        return
    data = [result.series["y"].times] + [result.series[c].values for c in cols[1:-1]]
    warm = np.asarray(result.warmup_mask, dtype=bool)
    for i in range(len(result)):
        row = ["%.17g" % float(col[i]) for col in data]
        row.append("1" if warm[i] else "0")
        out.write(",".join(row) + "\n")


def emit_csv(result: RunResult, path: str | Path) -> None:
    """Write ``result`` as CSV; values use 17 significant digits."""
    with open(path, "w", encoding="ascii", newline="") as fh:
        write_csv(result, fh)


def read_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Read a CSV written by :func:`emit_csv` into one array per column."""
    with open(path, encoding="ascii", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    out = {}
    for j, name in enumerate(header):
        col = [r[j] for r in rows]
        if name == "warmup":
            out[name] = np.array([c == "1" for c in col], dtype=bool)
        else:
            out[name] = np.array(col, dtype=float)
    return out


def _fmt(v: float | str | None) -> str:
    if v is None:
        return "undefined"
    return v if isinstance(v, str) else "%.6g" % v


def format_metrics(m: Metrics) -> str:
    return "\n".join(f"{k:>20s}  {_fmt(v)}" for k, v in m.as_dict().items())


def _apply_overrides(cfg: ScenarioConfig, args: argparse.Namespace) -> ScenarioConfig:
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.duration is not None:
        changes["duration"] = args.duration
    try:
        if getattr(args, "dt", None) is not None:
            changes["plant"] = replace(cfg.plant, dt=args.dt)
        return cfg.with_overrides(**changes)
    except ValueError as exc:
        raise ConfigError(f"override rejected: {exc}") from None


def _load(args: argparse.Namespace) -> ScenarioConfig:
    return _apply_overrides(resolve(args.scenario), args)


def cmd_run(args: argparse.Namespace, out: TextIO) -> int:
    cfg = _load(args)
    result = run_scenario(cfg)
    if args.out:
        emit_csv(result, args.out)
    if args.format == "csv":
        if not args.out:
            write_csv(result, out)
        return EXIT_OK
    out.write(f"scenario {cfg.id} ({result.variant}), seed {cfg.seed}, {len(result)} samples\n")
    if result.metrics is None:
        out.write("metrics undefined: the run ends inside warm-up\n")
        return EXIT_OK
    out.write(format_metrics(result.metrics) + "\n")
    steps = [t for t, _ in cfg.demand.levels[1:]]
    for rec in shock_recovery(result, steps) if steps else []:
        when = "not recovered" if rec.recovery_time is None else f"{rec.recovery_time:.6g} d"
        out.write(
            f"  step at t={rec.step_time:g}: peak |e| {rec.peak_error:.4g}, "
            f"envelope {rec.pre_envelope:.4g}, recovery {when}\n"
        )
    return EXIT_OK


def _parse_gains(text: str) -> list[float]:
    try:
        gains = [float(g) for g in text.split(",") if g.strip()]
    except ValueError:
        raise UsageError(f"--gains: not a list of numbers: {text!r}") from None
    if not gains:
        raise UsageError("--gains is empty")
    return gains


def cmd_sweep(args: argparse.Namespace, out: TextIO) -> int:
    gains = _parse_gains(args.gains)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    cfg = _load(args)
    table = gain_sweep(cfg, gains, args.bound, jobs=args.jobs)
    cols = ("gain_Kp", "tracking_rmse", "steady_state_error", "steady_envelope",
            "control_variance", "bullwhip_ratio", "drift_slope")
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for gain, m in table:
        d = m.as_dict()
        buf.write(",".join([repr(gain)] + [
            d[c] if isinstance(d[c], str) else "%.17g" % d[c] for c in cols[1:]
        ]) + "\n")
    if args.out:
        Path(args.out).write_text(buf.getvalue(), encoding="ascii")
    out.write(buf.getvalue())
    return EXIT_OK


def cmd_bias_drift(args: argparse.Namespace, out: TextIO) -> int:
    cfg = resolve(args.scenario)
    plant = cfg.plant if args.dt is None else replace(cfg.plant, dt=args.dt)
    m = bias_drift_experiment(args.bias, plant, args.duration, args.demand)
    out.write(f"bias {args.bias:g}: drift_slope {m.drift_slope:.10g} (expected {args.bias:g})\n")
    return EXIT_OK


def cmd_list(args: argparse.Namespace, out: TextIO) -> int:
    for fid in list_fixtures():
        cfg = load_fixture(fid)
        out.write(f"{fid}\t{cfg.controller.variant}\t{cfg.description}\n")
    return EXIT_OK


def cmd_validate(args: argparse.Namespace, out: TextIO) -> int:
    cfg = resolve(args.scenario)
    out.write(f"{args.scenario}: ok ({cfg.id}, {cfg.controller.variant}, {cfg.n_samples} samples)\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="invdelay", description="Inventory control simulations for delay systems.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_opts(sp, overrides=True):
        sp.add_argument("--scenario", required=True, help="fixture id (S1..S8) or config path")
        if overrides:
            sp.add_argument("--seed", type=int, help="override the scenario seed")
            sp.add_argument("--duration", type=float, help="override the run length in days")
            sp.add_argument("--dt", type=float, help="override the sampling step in days")

    r = sub.add_parser("run", help="simulate one scenario")
    scenario_opts(r)
    r.add_argument("--out", help="write the CSV here")
    r.add_argument("--format", choices=("csv", "summary"), default="csv")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="gain sweep under bounded forecast error")
    scenario_opts(s)
    s.add_argument("--gains", required=True, help="comma-separated K_p values")
    s.add_argument("--bound", type=float, default=1.0, help="forecast error bound M")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.add_argument("--out", help="also write the table here")
    s.set_defaults(func=cmd_sweep)

    b = sub.add_parser("bias-drift", help="open-loop biased feedforward drift")
    b.add_argument("--scenario", default="S1", help="plant taken from this scenario")
    b.add_argument("--bias", type=float, required=True)
    b.add_argument("--duration", type=float, default=200.0)
    b.add_argument("--demand", type=float, default=20.0, help="constant demand level")
    b.add_argument("--dt", type=float, help="override the sampling step in days")
    b.set_defaults(func=cmd_bias_drift)

    ls = sub.add_parser("list-scenarios", help="list bundled fixtures")
    ls.set_defaults(func=cmd_list)

    v = sub.add_parser("validate", help="check a scenario file")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: Sequence[str] | None = None, out: TextIO | None = None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"invdelay: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"invdelay: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ScenarioError, ValueError, ArithmeticError, OSError) as exc:
        print(f"invdelay: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
