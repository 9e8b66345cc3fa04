"""Command-line front end: solve, simulate, sweep, compare.

Exit status: 0 success, 1 validation error, 2 solver non-convergence
anywhere in a sweep, 3 comparison failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from dataclasses import fields
from pathlib import Path

from . import __version__, sim
from .harness import (
    SweepRow,
    Tolerances,
    analytic_row,
    compare_engines,
    comparison_to_csv,
    echo_config,
    format_value,
    load_sweep_spec,
    run_sweep,
    sweep_rows_to_csv,
)
from .scenario import (
    BacVariant,
    ConfigError,
    ScenarioParams,
    load_scenario,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NO_CONVERGENCE = 2
EXIT_COMPARISON = 3

SIM_COLUMNS = (
    "variant",
    "seed",
    "horizon_s",
    "sim_time_s",
    "blocks_generated",
    "blocks_success",
    "blocks_discarded",
    "tx_confirmed",
    "empirical_tau",
    "empirical_theta_t",
    "empirical_theta_s",
    "empirical_theta_d",
    "empirical_eta",
    "empirical_p_m",
    "collision_count",
)


def _add_scenario_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="scenario config file (key = value lines)")
    for field in fields(ScenarioParams):
        flag = "--" + field.name.replace("_", "-")
        parser.add_argument(flag, dest=field.name, type=str, default=None,
                            help=f"override {field.name}")


def _scenario_from_args(args: argparse.Namespace) -> ScenarioParams:
    params = load_scenario(args.config) if args.config else ScenarioParams()
    overrides = {}
    for field in fields(ScenarioParams):
        raw = getattr(args, field.name, None)
        if raw is not None:
            value = float(raw)
            overrides[field.name] = int(value) if field.type == "int" else value
    return params.with_(**overrides) if overrides else params


def _write_with_sidecar(out: Path, payload: str, params_echo: str, command: str) -> None:
    out.write_text(payload)
    meta = "\n".join(
        [
            f"tool = blockmac {__version__}",
            f"command = {command}",
            f"written_utc = {time.strftime('%Y-%m-%dT%H:%M:%SZ', time.gmtime())}",
            "",
            params_echo,
            "",
        ]
    )
    out.with_suffix(out.suffix + ".meta.txt").write_text(meta)


def _cmd_solve(args: argparse.Namespace) -> int:
    params = _scenario_from_args(args)
    variant = BacVariant(args.variant)
    row = analytic_row(params, variant, axis_value=0.0)
    payload = sweep_rows_to_csv([row])
    if args.out:
        _write_with_sidecar(args.out, payload, echo_config(params), "solve")
    else:
        sys.stdout.write(payload)
    if row.status == "ok":
        return EXIT_OK
    return EXIT_NO_CONVERGENCE if "convergence" in row.status else EXIT_VALIDATION


def _cmd_simulate(args: argparse.Namespace) -> int:
    params = _scenario_from_args(args)
    variant = BacVariant(args.variant)
    trace_file = None
    trace_cb = None
    if args.trace:
        trace_file = open(args.trace, "w")

        def trace_cb(t: float, node: int, kind: str, detail: str) -> None:
            trace_file.write(f"{t:.9f}\t{node}\t{kind}\t{detail}\n")

    try:
        lines = [",".join(SIM_COLUMNS)]
        for seed in args.seeds:
            report = sim.run(params, variant, args.horizon_s, seed, trace=trace_cb)
            cells = [variant.value, seed, args.horizon_s] + [
                getattr(report, col) for col in SIM_COLUMNS[3:]
            ]
            lines.append(",".join(format_value(c) for c in cells))
    finally:
        if trace_file:
            trace_file.close()
    payload = "\n".join(lines) + "\n"
    if args.out:
        _write_with_sidecar(args.out, payload, echo_config(params), "simulate")
    else:
        sys.stdout.write(payload)
    return EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    spec = load_sweep_spec(args.spec)
    rows = run_sweep(spec, workers=args.workers)
    payload = sweep_rows_to_csv(rows)
    if args.out:
        _write_with_sidecar(args.out, payload, echo_config(spec.base), "sweep")
    else:
        sys.stdout.write(payload)
    if any(row.status != "ok" for row in rows):
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _read_sweep_csv(path: Path) -> list[SweepRow]:
    rows = []
    with open(path, newline="") as fh:
        for record in csv.DictReader(fh):
            rows.append(
                SweepRow(
                    axis_value=float(record["axis_value"]),
                    variant=record["variant"],
                    engine=record["engine"],
                    seed=int(record["seed"]),
                    theta_t=float(record["theta_t"]),
                    theta_s=float(record["theta_s"]),
                    theta_d=float(record["theta_d"]),
                    eta=float(record["eta"]),
                    p_m=float(record["p_m"]),
                    tau=float(record["tau"]),
                    clamped_flag=record["clamped_flag"] == "1",
                    residual=float(record["residual"]),
                    status=record["status"],
                )
            )
    return rows


def _cmd_compare(args: argparse.Namespace) -> int:
    analytic = [r for r in _read_sweep_csv(args.analytic) if r.engine == "analytic"]
    simulated = [r for r in _read_sweep_csv(args.sim) if r.engine == "sim"]
    tol = Tolerances(rel=args.rel_tol, theta_d_rel=args.theta_d_rel_tol, p_m_abs=args.pm_abs_tol)
    rows = compare_engines(analytic, simulated, tol)
    payload = comparison_to_csv(rows)
    if args.out:
        args.out.write_text(payload)
    else:
        sys.stdout.write(payload)
    return EXIT_OK if all(r.passed for r in rows) else EXIT_COMPARISON


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blockmac",
        description="Block access control over CSMA/CA: analytic models and simulation",
    )
    parser.add_argument("--version", action="version", version=f"blockmac {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve one analytic operating point")
    _add_scenario_flags(p_solve)
    p_solve.add_argument("--variant", required=True, choices=[v.value for v in BacVariant])
    p_solve.add_argument("--out", type=Path)
    p_solve.set_defaults(func=_cmd_solve)

    p_sim = sub.add_parser("simulate", help="run seeded simulations of one point")
    _add_scenario_flags(p_sim)
    p_sim.add_argument("--variant", required=True, choices=[v.value for v in BacVariant])
    p_sim.add_argument("--horizon-s", dest="horizon_s", type=float, default=2000.0)
    p_sim.add_argument("--seeds", type=int, nargs="+", default=[0])
    p_sim.add_argument("--trace", type=Path, help="write an event trace to this file")
    p_sim.add_argument("--out", type=Path)
    p_sim.set_defaults(func=_cmd_simulate)

    p_sweep = sub.add_parser("sweep", help="run a sweep spec file")
    p_sweep.add_argument("--spec", type=Path, required=True)
    p_sweep.add_argument("--out", type=Path)
    p_sweep.add_argument("--workers", type=int, default=1)
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cmp = sub.add_parser("compare", help="compare analytic and sim sweep CSVs")
    p_cmp.add_argument("--analytic", type=Path, required=True)
    p_cmp.add_argument("--sim", type=Path, required=True)
    p_cmp.add_argument("--out", type=Path)
    p_cmp.add_argument("--rel-tol", dest="rel_tol", type=float, default=0.05)
    p_cmp.add_argument("--theta-d-rel-tol", dest="theta_d_rel_tol", type=float, default=0.05)
    p_cmp.add_argument("--pm-abs-tol", dest="pm_abs_tol", type=float, default=0.02)
    p_cmp.set_defaults(func=_cmd_compare)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
