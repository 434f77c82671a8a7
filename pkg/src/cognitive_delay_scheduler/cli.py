#!/usr/bin/env python
"""
Command line driver: experiment presets, output files and exit status.

Presets:

``fig2`` (alias ``delay``)
    Arrival-rate sweeps of the delay-constrained scenario (d = 1.25, 3) and
    the unconstrained one (d = 3, 3), plus their sum-cost comparison.
``fig3`` (alias ``cost``)
    ``fig2`` plus the constrained sweep under imperfect CSI, compared
    against the perfect-CSI curve.
``vsweep``
    V in {10, 100, 1000, 10000} at an arrival rate of 0.5 per user.
``csi``
    Exhaustive interference check of the power rule, perfect and imperfect CSI.
``custom``
    Replicates of the loaded scenario exactly as configured.

Output files are prefixed with the preset name as given on the command line.

Exit status: 0 when every check held, 1 on an execution error or a failed
hard check, 2 when only statistical (soft) checks failed. Partial outputs
stay on disk next to a ``FAILED`` marker.
"""

import argparse
import csv
import json
import logging
import os
import subprocess
import sys
from dataclasses import dataclass, field
from typing import IO, Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple

from portalocker import LOCK_EX, LOCK_NB, LockException, lock, unlock

from .__version__ import __version__
from .channel import interference_audit
from .config import check_horizon, default_scenario, read_config, resolved_config
from .engine import Scenario, SweepAxis, SweepPoint, sweep
from .exceptions import SimulationError
from .log import configure_logging
from .metrics import (
    CheckResult,
    CurveComparison,
    CurvePoint,
    build_curve,
    check_asymmetry,
    check_delay_bound,
    check_interference,
    check_light_load_ordering,
    check_nonincreasing,
    check_stability,
    check_sum_cost_consistency,
    compare_curves,
    exit_status,
    report_constraint_price,
    write_comparison_csv,
    write_curve_csv,
)
from .streams import Purpose, make_stream

__all__ = ["PRESET_ALIASES", "PRESET_NAMES", "ExperimentPreset", "main", "run_preset"]

logger = logging.getLogger(__name__)

PRESET_NAMES = ("fig2", "fig3", "vsweep", "csi", "custom")
PRESET_ALIASES = {"delay": "fig2", "cost": "fig3"}
LAMBDA_GRID = tuple(round(0.1 * i, 1) for i in range(1, 11))
V_GRID = (10.0, 100.0, 1000.0, 10000.0)
CONSTRAINED_BOUNDS = (1.25, 3.0)
UNCONSTRAINED_BOUNDS = (3.0, 3.0)
VSWEEP_ARRIVAL_RATE = 0.5
AUDIT_SAMPLES = 1_000_000
DEFAULT_REPLICATES = 5
LOCK_FILE = ".__run.lock"
FAILED_MARKER = "FAILED"

EXIT_ERROR = 1


@dataclass(frozen=True)
class ExperimentPreset:
    """A named experiment.

    ``overrides`` may replace ``lambda_values``, ``v_values``,
    ``arrival_rate`` (V sweep) or ``audit_samples``.
    """

    name: str
    overrides: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.name not in PRESET_NAMES and self.name not in PRESET_ALIASES:
            choices = PRESET_NAMES + tuple(PRESET_ALIASES)
            raise SimulationError(f"unknown preset {self.name!r}; choose from {choices}")
        unknown = set(self.overrides) - {"lambda_values", "v_values", "arrival_rate", "audit_samples"}
        if unknown:
            raise SimulationError(f"unknown preset override(s): {sorted(unknown)}")

    @property
    def canonical(self) -> str:
        return PRESET_ALIASES.get(self.name, self.name)

    def get(self, key: str, default: Any) -> Any:
        return self.overrides.get(key, default)


@dataclass
class _Run:
    """Everything one preset run accumulates before it is written out."""

    preset: ExperimentPreset
    out_dir: str
    base: Scenario
    workers: int
    replicates: int
    trace_dir: Optional[str]
    log_settings: Dict[str, Any]
    checks: List[CheckResult] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    seeds: Dict[str, List[int]] = field(default_factory=dict)
    failed_points: int = 0

    def sweep(self, label: str, scenario: Scenario, axis: SweepAxis, values: Sequence[float]) -> List[SweepPoint]:
        points = sweep(
            scenario,
            axis,
            values,
            replicates=self.replicates,
            workers=self.workers,
            trace_dir=self.trace_dir,
            label=label,
            **self.log_settings,
        )
        self.seeds[label] = sorted({p.seed for p in points})
        self.failed_points += sum(1 for p in points if not p.ok)
        return points

    def write_curve(self, label: str, points: Sequence[SweepPoint]) -> List[CurvePoint]:
        curve = build_curve(points)
        path = os.path.join(self.out_dir, f"{label}.csv")
        write_curve_csv(curve, path)
        self.outputs.append(path)
        return curve

    def write_comparison(self, label: str, comparison: CurveComparison) -> None:
        path = os.path.join(self.out_dir, f"{label}.csv")
        write_comparison_csv(comparison, path)
        self.outputs.append(path)

    def hard_checks(self, label: str, scenario: Scenario, points: Sequence[SweepPoint]) -> None:
        reports = [p.report for p in points if p.report is not None]
        self.checks.append(
            check_interference(f"{label}: interference", reports, scenario.radio.interference_cap)
        )
        self.checks.append(
            check_sum_cost_consistency(f"{label}: sum cost", reports, scenario.costs)
        )


def _point_on(curve: Sequence[CurvePoint], x: float) -> Optional[CurvePoint]:
    return next((p for p in curve if abs(p.x - x) < 1e-12), None)


def _run_delay(run: _Run) -> Tuple[List[CurvePoint], List[SweepPoint]]:
    lambdas = run.preset.get("lambda_values", LAMBDA_GRID)
    constrained = run.base.with_delay_bounds(CONSTRAINED_BOUNDS)
    unconstrained = run.base.with_delay_bounds(UNCONSTRAINED_BOUNDS)

    c_points = run.sweep("constrained", constrained, SweepAxis.LAMBDA, lambdas)
    u_points = run.sweep("unconstrained", unconstrained, SweepAxis.LAMBDA, lambdas)
    c_curve = run.write_curve(f"{run.preset.name}_constrained", c_points)
    u_curve = run.write_curve(f"{run.preset.name}_unconstrained", u_points)

    run.hard_checks("constrained", constrained, c_points)
    run.hard_checks("unconstrained", unconstrained, u_points)
    run.checks.append(
        check_delay_bound("constrained: user 1 delay bound", c_curve, 0, CONSTRAINED_BOUNDS[0])
    )
    run.checks.append(check_asymmetry("unconstrained: user 1 slower than user 2", u_curve))
    if len(c_curve) == len(u_curve):
        run.checks.append(report_constraint_price("constraint price", c_curve, u_curve))
        run.write_comparison(f"{run.preset.name}_constraint_price", compare_curves(u_curve, c_curve))
    reports_ok = [
        p.report
        for p in c_points
        if p.report is not None and not p.report.delay_bound_violations[0]
    ]
    run.checks.append(check_stability("constrained: mean-rate stability", reports_ok))
    light = _point_on(u_curve, min(lambdas))
    heavy = _point_on(c_curve, max(lambdas))
    if light is not None and heavy is not None and light is not heavy:
        run.checks.append(check_light_load_ordering("light-load ordering", light, heavy))
    return c_curve, c_points


def _run_cost(run: _Run) -> None:
    perfect_curve, _ = _run_delay(run)
    lambdas = run.preset.get("lambda_values", LAMBDA_GRID)
    imperfect = run.base.with_delay_bounds(CONSTRAINED_BOUNDS).imperfect()
    i_points = run.sweep("imperfect", imperfect, SweepAxis.LAMBDA, lambdas)
    i_curve = run.write_curve(f"{run.preset.name}_imperfect", i_points)
    run.hard_checks("imperfect", imperfect, i_points)
    run.checks.append(
        check_delay_bound("imperfect: user 1 delay bound", i_curve, 0, CONSTRAINED_BOUNDS[0])
    )
    if [p.x for p in perfect_curve] == [p.x for p in i_curve]:
        comparison = compare_curves(perfect_curve, i_curve)
        run.write_comparison(f"{run.preset.name}_csi_comparison", comparison)
        logger.info(
            "Imperfect CSI costs %.1f%% to %.1f%% more than perfect CSI",
            comparison.min_relative_pct,
            comparison.max_relative_pct,
        )


def _run_vsweep(run: _Run) -> None:
    v_values = run.preset.get("v_values", V_GRID)
    rate = run.preset.get("arrival_rate", VSWEEP_ARRIVAL_RATE)
    scenario = run.base.with_delay_bounds(CONSTRAINED_BOUNDS).with_arrival_rate(rate)
    points = run.sweep("vsweep", scenario, SweepAxis.V, v_values)
    curve = run.write_curve("vsweep", points)
    run.hard_checks("vsweep", scenario, points)
    run.checks.append(check_nonincreasing("sum cost nonincreasing in V", curve))
    top = _point_on(curve, max(v_values))
    if top is not None:
        run.checks.append(
            check_delay_bound(f"V={top.x:g}: user 1 delay bound", [top], 0, CONSTRAINED_BOUNDS[0])
        )


def _run_csi(run: _Run) -> None:
    samples = run.preset.get("audit_samples", AUDIT_SAMPLES)
    path = os.path.join(run.out_dir, "csi_audit.csv")
    rows: List[List[Any]] = []
    for mode, scenario in (("perfect_csi", run.base), ("imperfect_csi", run.base.imperfect())):
        for index, user in enumerate(scenario.users):
            audit = interference_audit(
                user.profile,
                scenario.radio,
                samples,
                make_stream(scenario.seed, index, Purpose.CHANNEL),
                make_stream(scenario.seed, index, Purpose.CSI),
            )
            rows.append(
                [mode, index + 1, audit.samples, audit.violations, audit.max_interference, audit.max_ratio]
            )
            run.checks.append(
                CheckResult(
                    f"{mode}: user {index + 1} interference audit",
                    audit.violations == 0,
                    hard=True,
                    detail=f"violations={audit.violations} max_ratio={audit.max_ratio:.6g}",
                )
            )
    with open(path, "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["mode", "user", "samples", "violations", "max_interference", "max_ratio"])
        writer.writerows(rows)
    run.outputs.append(path)


def _run_custom(run: _Run) -> None:
    points = run.sweep("custom", run.base, SweepAxis.V, [run.base.control.v])
    curve = run.write_curve("custom", points)
    run.hard_checks("custom", run.base, points)
    for index, user in enumerate(run.base.users):
        run.checks.append(
            check_delay_bound(f"custom: user {index + 1} delay bound", curve, index, user.delay_bound)
        )
    run.checks.append(
        check_stability("custom: mean-rate stability", [p.report for p in points if p.report is not None])
    )


_PRESET_RUNNERS: Dict[str, Callable[[_Run], object]] = {
    "fig2": _run_delay,
    "fig3": _run_cost,
    "vsweep": _run_vsweep,
    "csi": _run_csi,
    "custom": _run_custom,
}


def git_describe() -> str:
    try:
        result = subprocess.run(  # noqa: S603
            ["git", "describe", "--always", "--dirty"],  # noqa: S607
            capture_output=True,
            text=True,
            check=True,
            cwd=os.path.dirname(os.path.abspath(__file__)),
        )
    except (OSError, subprocess.CalledProcessError):
        return "unknown"
    return result.stdout.strip() or "unknown"


def _write_json(path: str, payload: Any) -> None:
    with open(path, "w", encoding="utf-8") as out:
        json.dump(payload, out, indent=2, sort_keys=True)
        out.write("\n")


def _acquire(out_dir: str) -> IO[str]:
    stream = open(os.path.join(out_dir, LOCK_FILE), "a", encoding="utf-8")
    try:
        lock(stream, LOCK_EX | LOCK_NB)
    except LockException:
        stream.close()
        raise
    return stream


def run_preset(
    preset: ExperimentPreset,
    out_dir: str,
    workers: int = 1,
    base: Optional[Scenario] = None,
    trace: bool = False,
    replicates: int = DEFAULT_REPLICATES,
    applied_defaults: Optional[Tuple[str, ...]] = None,
    log_file: Optional[str] = None,
    log_level: str = "INFO",
    debug: bool = False,
) -> int:
    """Run ``preset`` into ``out_dir`` and return the process exit status."""
    os.makedirs(out_dir, exist_ok=True)
    try:
        lock_stream = _acquire(out_dir)
    except LockException:
        logger.error("Another run holds the lock on %s", out_dir)
        return EXIT_ERROR

    marker = os.path.join(out_dir, FAILED_MARKER)
    if os.path.exists(marker):
        os.remove(marker)
    run = _Run(
        preset=preset,
        out_dir=out_dir,
        base=base or default_scenario(),
        workers=workers,
        replicates=replicates,
        trace_dir=os.path.join(out_dir, "traces") if trace else None,
        log_settings={"log_file": log_file, "log_level": log_level, "debug": debug},
    )
    error: Optional[str] = None
    try:
        logger.info("Preset %s into %s (%d worker(s))", preset.name, out_dir, workers)
        _PRESET_RUNNERS[preset.canonical](run)
    except Exception as exc:
        logger.exception("Preset %s aborted", preset.name)
        error = f"{type(exc).__name__}: {exc}"

    status = exit_status(run.checks)
    if error is not None or run.failed_points:
        status = EXIT_ERROR
    try:
        _write_json(os.path.join(out_dir, "checks.json"), [c.to_dict() for c in run.checks])
        _write_json(
            os.path.join(out_dir, "manifest.json"),
            {
                "preset": preset.name,
                "overrides": dict(preset.overrides),
                "version": __version__,
                "git": git_describe(),
                "replicates": replicates,
                "workers": workers,
                "seeds": run.seeds,
                "scenario": resolved_config(run.base, applied_defaults),
                "outputs": [os.path.basename(p) for p in run.outputs],
                "failed_points": run.failed_points,
                "error": error,
                "exit_status": status,
            },
        )
        if status != 0:
            with open(marker, "w", encoding="utf-8") as out:
                out.write(f"exit status {status}\n")
                if error:
                    out.write(error + "\n")
    finally:
        unlock(lock_stream)
        lock_stream.close()
    logger.info("Preset %s finished with exit status %d", preset.name, status)
    return status


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cognitive-delay-sim",
        description="Delay-constrained uplink scheduling under an interference cap.",
    )
    parser.add_argument("--config", help="TOML scenario file (default: built-in two-user scenario)")
    parser.add_argument(
        "--preset",
        choices=PRESET_NAMES + tuple(PRESET_ALIASES),
        default="fig2",
        help="Experiment to run; delay and cost are aliases of fig2 and fig3",
    )
    parser.add_argument("--out", default="results", help="Output directory")
    parser.add_argument("--workers", type=_positive_int, default=1, help="Sweep worker processes")
    parser.add_argument("--seed", type=int, help="Override the scenario seed")
    parser.add_argument("--horizon", type=int, help="Override the slots simulated per point")
    parser.add_argument(
        "--replicates", type=_positive_int, default=DEFAULT_REPLICATES, help="Replicates per point"
    )
    parser.add_argument("--trace", action="store_true", help="Write packet and frame traces")
    parser.add_argument("--log-file", help="Shared run log (rotated, safe across workers)")
    parser.add_argument("--log-level", default="INFO", help="Log level (default: INFO)")
    parser.add_argument("--debug", action="store_true", help="Log every frame close")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_file, level=args.log_level, debug=args.debug)
    try:
        if args.config:
            resolved = read_config(args.config)
            base, applied = resolved.scenario, resolved.applied_defaults
        else:
            base, applied = default_scenario(), None
        if args.seed is not None:
            if args.seed < 0:
                raise SimulationError("--seed must be non-negative")
            base = base.with_seed(args.seed)
        if args.horizon is not None:
            check_horizon(args.horizon)
            base = base.with_horizon(args.horizon)
    except SimulationError as exc:
        logger.error("%s", exc)
        return EXIT_ERROR

    return run_preset(
        ExperimentPreset(args.preset),
        args.out,
        workers=args.workers,
        base=base,
        trace=args.trace,
        replicates=args.replicates,
        applied_defaults=applied,
        log_file=args.log_file,
        log_level=args.log_level,
        debug=args.debug,
    )


if __name__ == "__main__":
    sys.exit(main())
