"""Cost functions, replicate curves, curve comparison and acceptance checks.

Delays are in slots throughout. A :class:`CurvePoint` aggregates the
replicates of one sweep value; confidence half-widths are Student-t 95%
intervals across replicates (zero with a single replicate).
"""

import csv
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import TYPE_CHECKING, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .exceptions import GridMismatchError, ParameterError

if TYPE_CHECKING:
    from .engine import SimReport, SweepPoint

__all__ = [
    "QUADRATIC_HALF",
    "CheckResult",
    "CostKind",
    "CostSpec",
    "CurveComparison",
    "CurvePoint",
    "PointComparison",
    "build_curve",
    "check_asymmetry",
    "check_delay_bound",
    "check_interference",
    "check_light_load_ordering",
    "check_nonincreasing",
    "check_stability",
    "check_sum_cost_consistency",
    "compare_curves",
    "confidence_halfwidth",
    "cost_function",
    "exit_status",
    "report_constraint_price",
    "write_comparison_csv",
    "write_curve_csv",
]

logger = logging.getLogger(__name__)

CONVEXITY_GRID_MAX = 10.0
CONVEXITY_GRID_POINTS = 201
CONFIDENCE_LEVEL = 0.95


class CostKind(str, Enum):
    POWER = "power"
    EXP = "exp"


@dataclass(frozen=True)
class CostSpec:
    """Convex increasing delay cost ``h``.

    ``power``: ``scale * x ** exponent``; ``exp``: ``scale * (exp(rate * x) - 1)``.
    The default is ``x**2 / 2``.
    """

    kind: CostKind = CostKind.POWER
    scale: float = 0.5
    exponent: float = 2.0
    rate: float = 1.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", CostKind(self.kind))
        if not self.scale > 0:
            raise ParameterError("cost scale must be positive")
        if not self.rate > 0:
            raise ParameterError("cost rate must be positive")
        if not self.exponent > 0:
            raise ParameterError("cost exponent must be positive")
        grid = np.linspace(0.0, CONVEXITY_GRID_MAX, CONVEXITY_GRID_POINTS)
        values = self._evaluate(grid)
        first = np.diff(values)
        second = np.diff(values, n=2)
        slack = 1e-9 * max(1.0, float(np.abs(values).max()))
        if np.any(first <= 0):
            raise ParameterError(f"cost {self.describe()} is not increasing")
        if np.any(second < -slack):
            raise ParameterError(f"cost {self.describe()} is not convex")

    def _evaluate(self, x: "np.ndarray") -> "np.ndarray":
        if self.kind is CostKind.POWER:
            return self.scale * np.power(x, self.exponent)
        return self.scale * np.expm1(self.rate * x)

    def __call__(self, x: float) -> float:
        if self.kind is CostKind.POWER:
            return self.scale * x**self.exponent
        return self.scale * math.expm1(self.rate * x)

    def describe(self) -> str:
        if self.kind is CostKind.POWER:
            return f"{self.scale:g}*x^{self.exponent:g}"
        return f"{self.scale:g}*(exp({self.rate:g}*x)-1)"

    def closed_form_minimizer(self, weight: float, v: float, upper: float) -> Optional[float]:
        """``argmin_{r in [0, upper]} v*h(r) - weight*r`` when it has a closed form."""
        if weight <= 0:
            return 0.0
        if self.kind is CostKind.POWER:
            if self.exponent == 1:
                return 0.0 if v * self.scale >= weight else upper
            if self.exponent > 1:
                r = (weight / (v * self.scale * self.exponent)) ** (1.0 / (self.exponent - 1.0))
                return min(max(r, 0.0), upper)
            return None
        slope_at_zero = v * self.scale * self.rate
        if weight <= slope_at_zero:
            return 0.0
        return min(math.log(weight / slope_at_zero) / self.rate, upper)


QUADRATIC_HALF = CostSpec()


def cost_function(w: float, kind: CostSpec = QUADRATIC_HALF) -> float:
    """Evaluate the delay cost ``h(w)``."""
    if w < 0:
        raise ParameterError("delay must be non-negative")
    return kind(w)


@dataclass(frozen=True)
class CurvePoint:
    x: float
    per_user_delay: Tuple[float, ...]
    sum_cost: float
    ci_halfwidth: float
    per_user_ci: Tuple[float, ...] = ()
    max_interference: float = 0.0
    replicates: int = 1

    def __post_init__(self) -> None:
        if self.ci_halfwidth < 0 or any(ci < 0 for ci in self.per_user_ci):
            raise ParameterError("confidence half-widths must be non-negative")
        if self.per_user_ci and len(self.per_user_ci) != len(self.per_user_delay):
            raise ParameterError("per_user_ci must have one entry per user")


def confidence_halfwidth(samples: Sequence[float], level: float = CONFIDENCE_LEVEL) -> float:
    n = len(samples)
    if n < 2:
        return 0.0
    spread = float(np.std(samples, ddof=1))
    return float(stats.t.ppf((1.0 + level) / 2.0, n - 1)) * spread / math.sqrt(n)


def build_curve(points: Sequence["SweepPoint"]) -> List[CurvePoint]:
    """Aggregate sweep points into one CurvePoint per x value, in input order."""
    grouped: Dict[float, List["SimReport"]] = {}
    for point in points:
        grouped.setdefault(point.value, [])
        if point.report is None:
            logger.error(
                "Dropping failed point x=%g replicate=%d: %s",
                point.value,
                point.replicate,
                point.error,
            )
            continue
        grouped[point.value].append(point.report)

    curve = []
    for x, reports in grouped.items():
        if not reports:
            continue
        n_users = len(reports[0].per_user_delay)
        delays = [[r.per_user_delay[i] for r in reports] for i in range(n_users)]
        sums = [r.sum_cost for r in reports]
        curve.append(
            CurvePoint(
                x=x,
                per_user_delay=tuple(float(np.mean(d)) for d in delays),
                sum_cost=float(np.mean(sums)),
                ci_halfwidth=confidence_halfwidth(sums),
                per_user_ci=tuple(confidence_halfwidth(d) for d in delays),
                max_interference=max(r.max_interference_seen for r in reports),
                replicates=len(reports),
            )
        )
    return curve


def write_curve_csv(points: Sequence[CurvePoint], path: str) -> None:
    """One row per point: ``x, w_user1..N, ci_1..N, sum_cost, max_interference``."""
    n_users = len(points[0].per_user_delay) if points else 0
    header = (
        ["x"]
        + [f"w_user{i + 1}" for i in range(n_users)]
        + [f"ci_{i + 1}" for i in range(n_users)]
        + ["sum_cost", "max_interference"]
    )
    with open(path, "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(header)
        for p in points:
            cis = p.per_user_ci or (0.0,) * n_users
            writer.writerow(
                [p.x, *p.per_user_delay, *cis, p.sum_cost, p.max_interference]
            )


@dataclass(frozen=True)
class PointComparison:
    x: float
    a_sum_cost: float
    b_sum_cost: float
    difference: float
    relative_pct: float
    per_user_difference: Tuple[float, ...]


@dataclass(frozen=True)
class CurveComparison:
    points: Tuple[PointComparison, ...]
    # (label, x_start, x_end) runs of consecutive grid points where one curve
    # has the lower sum cost; label is "a", "b" or "tie".
    dominance: Tuple[Tuple[str, float, float], ...] = field(default_factory=tuple)

    @property
    def max_relative_pct(self) -> float:
        return max((p.relative_pct for p in self.points), default=0.0)

    @property
    def min_relative_pct(self) -> float:
        return min((p.relative_pct for p in self.points), default=0.0)


def compare_curves(
    a: Sequence[CurvePoint], b: Sequence[CurvePoint], tie_tolerance: float = 1e-12
) -> CurveComparison:
    """Per-point ``b - a`` differences, relative to ``a``, and dominance runs."""
    if [p.x for p in a] != [p.x for p in b]:
        raise GridMismatchError("curves must share the same x-grid")

    rows = []
    labels = []
    for pa, pb in zip(a, b):
        diff = pb.sum_cost - pa.sum_cost
        relative = 100.0 * diff / pa.sum_cost if pa.sum_cost else 0.0
        rows.append(
            PointComparison(
                x=pa.x,
                a_sum_cost=pa.sum_cost,
                b_sum_cost=pb.sum_cost,
                difference=diff,
                relative_pct=relative,
                per_user_difference=tuple(
                    wb - wa for wa, wb in zip(pa.per_user_delay, pb.per_user_delay)
                ),
            )
        )
        if abs(diff) <= tie_tolerance:
            labels.append("tie")
        else:
            labels.append("a" if diff > 0 else "b")

    runs: List[Tuple[str, float, float]] = []
    for label, row in zip(labels, rows):
        if runs and runs[-1][0] == label:
            runs[-1] = (label, runs[-1][1], row.x)
        else:
            runs.append((label, row.x, row.x))
    return CurveComparison(points=tuple(rows), dominance=tuple(runs))


def write_comparison_csv(comparison: CurveComparison, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as out:
        writer = csv.writer(out)
        writer.writerow(["x", "a_sum_cost", "b_sum_cost", "difference", "relative_pct"])
        for p in comparison.points:
            writer.writerow([p.x, p.a_sum_cost, p.b_sum_cost, p.difference, p.relative_pct])


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    hard: bool
    detail: str = ""
    informational: bool = False

    def to_dict(self) -> Dict[str, object]:
        return {
            "name": self.name,
            "passed": self.passed,
            "hard": self.hard,
            "detail": self.detail,
            "informational": self.informational,
        }


def _log_check(result: CheckResult) -> CheckResult:
    if result.informational:
        logger.info("Observed: %s %s", result.name, result.detail)
    elif result.passed:
        logger.info("Check passed: %s %s", result.name, result.detail)
    else:
        logger.error(
            "Check FAILED (%s): %s %s", "hard" if result.hard else "soft", result.name, result.detail
        )
    return result


def check_interference(
    name: str, reports: Sequence["SimReport"], interference_cap: float
) -> CheckResult:
    worst = max((r.max_interference_seen for r in reports), default=0.0)
    slack = interference_cap * (1.0 + 1e-9)
    return _log_check(
        CheckResult(name, worst <= slack, hard=True, detail=f"max P*g={worst:.6g} cap={interference_cap:g}")
    )


def check_sum_cost_consistency(
    name: str, reports: Sequence["SimReport"], costs: Sequence[CostSpec]
) -> CheckResult:
    bad = []
    for r in reports:
        recomputed = sum(h(w) for h, w in zip(costs, r.per_user_delay))
        if not math.isclose(recomputed, r.sum_cost, rel_tol=1e-12, abs_tol=1e-12):
            bad.append((r.seed, recomputed, r.sum_cost))
    return _log_check(CheckResult(name, not bad, hard=True, detail=f"mismatches={bad[:3]}"))


def check_delay_bound(
    name: str, curve: Sequence[CurvePoint], user: int, bound: float, tolerance: float = 0.04
) -> CheckResult:
    limit = bound * (1.0 + tolerance)
    offenders = [(p.x, p.per_user_delay[user]) for p in curve if p.per_user_delay[user] > limit]
    return _log_check(
        CheckResult(
            name,
            not offenders,
            hard=False,
            detail=f"user {user + 1} limit={limit:.4g} offenders={offenders}",
        )
    )


def check_asymmetry(
    name: str, curve: Sequence[CurvePoint], higher: int = 0, lower: int = 1
) -> CheckResult:
    """``W_higher > W_lower`` at every x, separated by the replicate CIs."""
    offenders = []
    for p in curve:
        ci_hi = p.per_user_ci[higher] if p.per_user_ci else 0.0
        ci_lo = p.per_user_ci[lower] if p.per_user_ci else 0.0
        if not p.per_user_delay[higher] - ci_hi > p.per_user_delay[lower] + ci_lo:
            offenders.append(p.x)
    return _log_check(CheckResult(name, not offenders, hard=False, detail=f"offenders={offenders}"))


def report_constraint_price(
    name: str,
    constrained: Sequence[CurvePoint],
    unconstrained: Sequence[CurvePoint],
    x_min: float = 0.6,
) -> CheckResult:
    """Which of the two curves is cheaper at each ``x >= x_min``.

    A point counts as ordered only when the replicate confidence intervals
    separate; ``passed`` is True when the constrained curve is never the
    cheaper one. The result is informational and never changes the exit status.
    """
    if [p.x for p in constrained] != [p.x for p in unconstrained]:
        raise GridMismatchError("curves must share the same x-grid")
    costlier: List[float] = []
    cheaper: List[float] = []
    overlapping: List[float] = []
    for pc, pu in zip(constrained, unconstrained):
        if pc.x < x_min - 1e-12:
            continue
        if pc.sum_cost - pc.ci_halfwidth > pu.sum_cost + pu.ci_halfwidth:
            costlier.append(pc.x)
        elif pc.sum_cost + pc.ci_halfwidth < pu.sum_cost - pu.ci_halfwidth:
            cheaper.append(pc.x)
        else:
            overlapping.append(pc.x)
    detail = f"constrained costlier at {costlier}, cheaper at {cheaper}, overlapping at {overlapping}"
    return _log_check(CheckResult(name, not cheaper, hard=False, detail=detail, informational=True))


def check_nonincreasing(name: str, curve: Sequence[CurvePoint]) -> CheckResult:
    """Sum cost nonincreasing along the curve, within the replicate CIs."""
    offenders = []
    for prev, cur in zip(curve, curve[1:]):
        if cur.sum_cost > prev.sum_cost + prev.ci_halfwidth + cur.ci_halfwidth:
            offenders.append((prev.x, cur.x))
    if len(curve) >= 2:
        first, last = curve[0], curve[-1]
        if last.sum_cost > first.sum_cost + first.ci_halfwidth + last.ci_halfwidth:
            offenders.append((first.x, last.x))
    return _log_check(CheckResult(name, not offenders, hard=False, detail=f"offenders={offenders}"))


def check_light_load_ordering(
    name: str,
    unconstrained_light: CurvePoint,
    constrained_heavy: CurvePoint,
    reference_user: int = 1,
) -> CheckResult:
    reference = constrained_heavy.per_user_delay[reference_user]
    passed = all(w < reference for w in unconstrained_light.per_user_delay)
    return _log_check(
        CheckResult(
            name,
            passed,
            hard=False,
            detail=f"light={unconstrained_light.per_user_delay} reference={reference:.4g}",
        )
    )


def check_stability(name: str, reports: Sequence["SimReport"]) -> CheckResult:
    unstable = [
        (r.seed, r.y_over_k_terminal) for r in reports if not all(r.mean_rate_stable)
    ]
    return _log_check(CheckResult(name, not unstable, hard=False, detail=f"unstable={unstable[:3]}"))


def exit_status(checks: Sequence[CheckResult]) -> int:
    """0 when everything held, 1 on a failed hard check, 2 on a failed soft one.

    Informational results are ignored.
    """
    checks = [c for c in checks if not c.informational]
    if any(c.hard and not c.passed for c in checks):
        return 1
    if any(not c.passed for c in checks):
        return 2
    return 0
