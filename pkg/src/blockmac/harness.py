"""Parameter sweeps over both engines, CSV emission and cross-engine comparison."""

from __future__ import annotations

import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

from . import sim
from .chain import NoConvergence, SingularDenominator, solve_tau
from .metrics import evaluate_metrics
from .scenario import (
    BacVariant,
    ConfigError,
    ScenarioParams,
    parse_kv_file,
    scenario_from_mapping,
)

__all__ = [
    "ComparisonRow",
    "KeyMismatch",
    "SweepRow",
    "SweepSpec",
    "Tolerances",
    "compare_engines",
    "format_value",
    "load_sweep_spec",
    "run_sweep",
    "sweep_rows_to_csv",
    "comparison_to_csv",
]

SWEEP_AXES = ("n_tx_per_block", "lambda_bkps", "n_nodes")
ENGINE_CHOICES = ("analytic", "sim", "both")
SWEEP_COLUMNS = (
    "axis_value",
    "variant",
    "engine",
    "seed",
    "theta_t",
    "theta_s",
    "theta_d",
    "eta",
    "p_m",
    "tau",
    "clamped_flag",
    "residual",
    "status",
)
COMPARISON_COLUMNS = (
    "axis_value",
    "variant",
    "metric",
    "analytic",
    "sim_mean",
    "sim_se",
    "rel_error",
    "abs_error",
    "tolerance",
    "passed",
)


class KeyMismatch(ValueError):
    """Analytic and simulated row sets cover different (axis value, variant) keys."""


@dataclass(frozen=True)
class SweepSpec:
    """One sweep: an axis, its values, the variants and engines to run."""

    base: ScenarioParams
    axis: str
    values: tuple[float, ...]
    variants: tuple[BacVariant, ...]
    engines: str = "analytic"
    seeds: int = 1
    horizon_s: float = 2000.0

    def __post_init__(self) -> None:
        if self.axis not in SWEEP_AXES:
            raise ConfigError(f"axis must be one of {SWEEP_AXES}, got {self.axis!r}")
        if not self.values:
            raise ConfigError("values must be nonempty")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ConfigError("values must be strictly increasing")
        if not self.variants:
            raise ConfigError("variants must be nonempty")
        if self.engines not in ENGINE_CHOICES:
            raise ConfigError(f"engines must be one of {ENGINE_CHOICES}")
        if self.engines in ("sim", "both") and self.seeds < 1:
            raise ConfigError("seeds must be >= 1 when the simulator runs")
        if self.horizon_s <= 0:
            raise ConfigError("horizon_s must be positive")


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    variant: str
    engine: str
    seed: int
    theta_t: float
    theta_s: float
    theta_d: float
    eta: float
    p_m: float
    tau: float
    clamped_flag: bool
    residual: float
    status: str = "ok"


_SWEEP_KEYS = {"axis", "values", "variants", "engines", "seeds", "horizon_s"}


def load_sweep_spec(path: str | Path) -> SweepSpec:
    """Sweep spec file: scenario keys plus the sweep-specific keys."""
    raw = parse_kv_file(path)
    sweep_raw = {k: raw.pop(k) for k in list(raw) if k in _SWEEP_KEYS}
    base = scenario_from_mapping(raw)
    if "axis" not in sweep_raw or "values" not in sweep_raw:
        raise ConfigError("sweep spec needs 'axis' and 'values'")
    axis = sweep_raw["axis"]
    try:
        values = tuple(float(v) for v in sweep_raw["values"].split(","))
    except ValueError:
        raise ConfigError(f"bad values list: {sweep_raw['values']!r}") from None
    variants_raw = sweep_raw.get("variants", "BAC1,BAC2,BAC3,BAC4")
    try:
        variants = tuple(BacVariant(v.strip()) for v in variants_raw.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"bad variants list: {variants_raw!r}") from None
    try:
        seeds = int(sweep_raw.get("seeds", "1"))
        horizon = float(sweep_raw.get("horizon_s", "2000"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return SweepSpec(
        base=base,
        axis=axis,
        values=values,
        variants=variants,
        engines=sweep_raw.get("engines", "analytic"),
        seeds=seeds,
        horizon_s=horizon,
    )


def _axis_params(spec: SweepSpec, value: float) -> ScenarioParams:
    if spec.axis == "lambda_bkps":
        return spec.base.with_(lambda_bkps=value)
    return spec.base.with_(**{spec.axis: int(value)})


def analytic_row(params: ScenarioParams, variant: BacVariant, axis_value: float) -> SweepRow:
    """Solve one analytic point; failures are recorded in the row status."""
    try:
        solution = solve_tau(params, variant, raise_on_failure=False)
    except SingularDenominator as exc:
        nan = math.nan
        return SweepRow(
            axis_value, variant.value, "analytic", -1,
            nan, nan, nan, nan, nan, nan, False, nan,
            status=f"singular_denominator: {exc}",
        )
    report = evaluate_metrics(params, solution)
    return SweepRow(
        axis_value=axis_value,
        variant=variant.value,
        engine="analytic",
        seed=-1,
        theta_t=report.theta_t,
        theta_s=report.theta_s,
        theta_d=report.theta_d,
        eta=report.eta,
        p_m=report.p_m,
        tau=solution.tau,
        clamped_flag=solution.clamped,
        residual=solution.residual,
        status="ok" if solution.converged else "no_convergence",
    )


def sim_row(
    params: ScenarioParams,
    variant: BacVariant,
    axis_value: float,
    horizon_s: float,
    seed: int,
) -> SweepRow:
    report = sim.run(params, variant, horizon_s, seed)
    return SweepRow(
        axis_value=axis_value,
        variant=variant.value,
        engine="sim",
        seed=seed,
        theta_t=report.empirical_theta_t,
        theta_s=report.empirical_theta_s,
        theta_d=report.empirical_theta_d,
        eta=report.empirical_eta,
        p_m=report.empirical_p_m,
        tau=report.empirical_tau,
        clamped_flag=False,
        residual=0.0,
        status="ok",
    )


def _run_task(task) -> SweepRow:
    kind, params, variant, axis_value, horizon, seed = task
    if kind == "analytic":
        return analytic_row(params, variant, axis_value)
    return sim_row(params, variant, axis_value, horizon, seed)


def run_sweep(spec: SweepSpec, workers: int = 1) -> list[SweepRow]:
    """All rows of a sweep, in deterministic spec order regardless of workers."""
    tasks = []
    for value in spec.values:
        params = _axis_params(spec, value)
        for variant in spec.variants:
            if spec.engines in ("analytic", "both"):
                tasks.append(("analytic", params, variant, value, spec.horizon_s, -1))
            if spec.engines in ("sim", "both"):
                for seed in range(spec.seeds):
                    tasks.append(("sim", params, variant, value, spec.horizon_s, seed))
    if workers <= 1:
        return [_run_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_task, tasks, chunksize=1))


# --- CSV emission ------------------------------------------------------------


def format_value(value) -> str:
    """Stable CSV cell formatting: floats at 9 significant digits."""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return f"{value:.9g}"
    return str(value)


def sweep_rows_to_csv(rows: list[SweepRow]) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join(format_value(getattr(row, col)) for col in SWEEP_COLUMNS))
    return "\n".join(lines) + "\n"


# --- engine comparison --------------------------------------------------------


@dataclass(frozen=True)
class Tolerances:
    """Pass/fail thresholds for the comparison report.

    Relative tolerances apply to tau and the rate metrics; p_m is compared
    absolutely since it is a probability near 0 or 1.
    """

    rel: float = 0.05
    theta_d_rel: float = 0.05
    p_m_abs: float = 0.02


@dataclass(frozen=True)
class ComparisonRow:
    axis_value: float
    variant: str
    metric: str
    analytic: float
    sim_mean: float
    sim_se: float
    rel_error: float
    abs_error: float
    tolerance: float
    passed: bool


_REL_METRICS = ("tau", "theta_t", "theta_s", "theta_d")
_ABS_METRICS = ("p_m", "eta")


def compare_engines(
    analytic_rows: list[SweepRow],
    sim_rows: list[SweepRow],
    tolerances: Tolerances = Tolerances(),
) -> list[ComparisonRow]:
    """Per (axis value, variant): relative error of sim means vs analytic."""
    analytic = {(r.axis_value, r.variant): r for r in analytic_rows}
    grouped: dict[tuple[float, str], list[SweepRow]] = {}
    for row in sim_rows:
        grouped.setdefault((row.axis_value, row.variant), []).append(row)
    if set(analytic) != set(grouped):
        missing = set(analytic) ^ set(grouped)
        raise KeyMismatch(f"row sets differ on keys: {sorted(missing)}")
    out: list[ComparisonRow] = []
    for key in sorted(grouped):
        ref = analytic[key]
        group = grouped[key]
        for metric in _REL_METRICS + _ABS_METRICS:
            ref_value = getattr(ref, metric)
            samples = [getattr(r, metric) for r in group]
            mean = statistics.fmean(samples)
            se = (
                statistics.stdev(samples) / math.sqrt(len(samples))
                if len(samples) > 1
                else 0.0
            )
            abs_error = abs(mean - ref_value)
            rel_error = abs_error / abs(ref_value) if ref_value else math.inf
            if metric in _REL_METRICS:
                tol = tolerances.theta_d_rel if metric == "theta_d" else tolerances.rel
                passed = rel_error <= tol
            else:
                tol = tolerances.p_m_abs
                passed = abs_error <= tol if metric == "p_m" else True
            out.append(
                ComparisonRow(
                    axis_value=key[0],
                    variant=key[1],
                    metric=metric,
                    analytic=ref_value,
                    sim_mean=mean,
                    sim_se=se,
                    rel_error=rel_error,
                    abs_error=abs_error,
                    tolerance=tol,
                    passed=passed,
                )
            )
    return out


def comparison_to_csv(rows: list[ComparisonRow]) -> str:
    lines = [",".join(COMPARISON_COLUMNS)]
    for row in rows:
        lines.append(",".join(format_value(getattr(row, col)) for col in COMPARISON_COLUMNS))
    return "\n".join(lines) + "\n"


def echo_config(params: ScenarioParams) -> str:
    """Scenario echo in the config-file format (for sidecar metadata)."""
    return "\n".join(f"{f.name} = {format_value(getattr(params, f.name))}" for f in fields(params))
