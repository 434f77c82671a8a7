"""TOML scenario files.

A minimal file only needs the users' interference gains::

    [[users]]
    mean_interference_gain = 4.0

    [[users]]
    mean_interference_gain = 2.0

Everything else falls back to the defaults below. Every default that was
filled in is recorded in :class:`ResolvedConfig` so that the run manifest can
echo it. Unknown keys are errors.
"""

import logging
import sys
from dataclasses import asdict, dataclass, is_dataclass
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .channel import DEFAULT_DIRECT_GAIN_FLOOR, FadingProfile, RadioParams
from .doic import ControlParams
from .engine import (
    DEFAULT_HORIZON_SLOTS,
    DEFAULT_MU_SAMPLES,
    IMPERFECT_CSI_BACKOFF,
    IMPERFECT_CSI_ERROR_BOUND,
    CsiMode,
    Scenario,
    SimOptions,
    UserSpec,
)
from .exceptions import ConfigError, ParameterError
from .metrics import CostSpec
from .queueing import DEFAULT_MAX_FRAME_SLOTS

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "MIN_REPORTED_HORIZON",
    "ResolvedConfig",
    "check_horizon",
    "default_scenario",
    "load_config",
    "parse_config",
    "read_config",
    "resolved_config",
]

logger = logging.getLogger(__name__)

MIN_REPORTED_HORIZON = 10_000

_TOP_DEFAULTS: Dict[str, Any] = {
    "seed": 1,
    "horizon_slots": DEFAULT_HORIZON_SLOTS,
    "mode": CsiMode.PERFECT.value,
}
_RADIO_DEFAULTS: Dict[str, Any] = {
    "bandwidth_slots": 10.0,
    "max_power": 10.0,
    "interference_cap": 5.0,
    "csi_backoff": 1.0,
    "csi_error_bound": 0.0,
}
_CONTROL_DEFAULTS: Dict[str, Any] = {"v": 1000.0, "tolerance": 1e-2}
_COST_DEFAULTS: Dict[str, Any] = {"kind": "power", "scale": 0.5, "exponent": 2.0, "rate": 1.0}
_SIMULATION_DEFAULTS: Dict[str, Any] = {
    "max_frame_slots": DEFAULT_MAX_FRAME_SLOTS,
    "warmup_fraction": 0.1,
    "service_model": "floor",
    "starvation_policy": "hold",
    "mu_mode": "offline",
    "mu_samples": DEFAULT_MU_SAMPLES,
    "stability_threshold": 1e-2,
}
_USER_DEFAULTS: Dict[str, Any] = {
    "mean_direct_gain": 1.0,
    "direct_gain_floor": DEFAULT_DIRECT_GAIN_FLOOR,
    "arrival_rate": 0.5,
    "delay_bound": 3.0,
}
_USER_REQUIRED = ("mean_interference_gain",)
_INT_KEYS = {"seed", "horizon_slots", "max_frame_slots", "mu_samples"}
_STR_KEYS = {"mode", "kind", "service_model", "starvation_policy", "mu_mode"}


@dataclass(frozen=True)
class ResolvedConfig:
    scenario: Scenario
    applied_defaults: Tuple[str, ...]


class _Section:
    """Reads one table, tracking defaults and rejecting unknown keys."""

    def __init__(self, name: str, table: Any, applied: List[str]):
        if not isinstance(table, Mapping):
            raise ConfigError(f"[{name}] must be a table")
        self.name = name
        self.table = table
        self.applied = applied

    def reject_unknown(self, allowed: Any) -> None:
        unknown = sorted(set(self.table) - set(allowed))
        if unknown:
            raise ConfigError(f"[{self.name}] unknown key(s): {', '.join(unknown)}")

    def get(self, key: str, default: Any) -> Any:
        if key not in self.table:
            self.applied.append(f"{self.name}.{key}={default!r}")
            return default
        value = self.table[key]
        where = f"[{self.name}] {key}"
        if key in _STR_KEYS:
            if not isinstance(value, str):
                raise ConfigError(f"{where} must be a string")
        elif key in _INT_KEYS:
            if isinstance(value, bool) or not isinstance(value, int):
                raise ConfigError(f"{where} must be an integer")
        elif isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where} must be a number")
        return value

    def require(self, key: str) -> Any:
        if key not in self.table:
            raise ConfigError(f"[{self.name}] missing required key {key}")
        return self.get(key, None)

    def build(self, factory: Any, **kwargs: Any) -> Any:
        try:
            return factory(**kwargs)
        except (ParameterError, ValueError) as exc:
            raise ConfigError(f"[{self.name}] {exc}") from exc


def _cost(name: str, table: Any, applied: List[str]) -> CostSpec:
    section = _Section(name, table, applied)
    section.reject_unknown(_COST_DEFAULTS)
    values = {key: section.get(key, default) for key, default in _COST_DEFAULTS.items()}
    return section.build(CostSpec, **values)  # type: ignore[no-any-return]


def check_horizon(horizon_slots: int) -> None:
    if horizon_slots < MIN_REPORTED_HORIZON:
        raise ConfigError(f"horizon_slots must be at least {MIN_REPORTED_HORIZON}")


def parse_config(data: Mapping[str, Any], source: str = "<config>") -> ResolvedConfig:
    """Validate a decoded TOML document into a scenario."""
    applied: List[str] = []
    top = _Section("top", data, applied)
    top.reject_unknown(set(_TOP_DEFAULTS) | {"radio", "control", "simulation", "users"})
    seed = top.get("seed", _TOP_DEFAULTS["seed"])
    horizon = top.get("horizon_slots", _TOP_DEFAULTS["horizon_slots"])
    mode_name = top.get("mode", _TOP_DEFAULTS["mode"])
    try:
        mode = CsiMode(mode_name)
    except ValueError:
        raise ConfigError(f"[top] mode must be one of {[m.value for m in CsiMode]}") from None
    if seed < 0:
        raise ConfigError("[top] seed must be non-negative")
    check_horizon(horizon)

    radio_section = _Section("radio", data.get("radio", {}), applied)
    radio_section.reject_unknown(_RADIO_DEFAULTS)
    radio_defaults = dict(_RADIO_DEFAULTS)
    if mode is CsiMode.IMPERFECT:
        radio_defaults["csi_backoff"] = IMPERFECT_CSI_BACKOFF
        radio_defaults["csi_error_bound"] = IMPERFECT_CSI_ERROR_BOUND
    radio = radio_section.build(
        RadioParams, **{k: radio_section.get(k, d) for k, d in radio_defaults.items()}
    )

    control_section = _Section("control", data.get("control", {}), applied)
    control_section.reject_unknown(set(_CONTROL_DEFAULTS) | {"cost"})
    default_cost = _cost("control.cost", control_section.table.get("cost", {}), applied)
    control = control_section.build(
        ControlParams,
        cost=default_cost,
        **{k: control_section.get(k, d) for k, d in _CONTROL_DEFAULTS.items()},
    )

    sim_section = _Section("simulation", data.get("simulation", {}), applied)
    sim_section.reject_unknown(_SIMULATION_DEFAULTS)
    options = sim_section.build(
        SimOptions, **{k: sim_section.get(k, d) for k, d in _SIMULATION_DEFAULTS.items()}
    )

    raw_users = data.get("users")
    if not isinstance(raw_users, list) or not raw_users:
        raise ConfigError("[[users]] at least one user table is required")
    users = []
    for index, raw in enumerate(raw_users):
        name = f"users[{index}]"
        section = _Section(name, raw, applied)
        section.reject_unknown(set(_USER_DEFAULTS) | set(_USER_REQUIRED) | {"cost"})
        profile = section.build(
            FadingProfile,
            mean_direct_gain=section.get("mean_direct_gain", _USER_DEFAULTS["mean_direct_gain"]),
            mean_interference_gain=section.require("mean_interference_gain"),
            direct_gain_floor=section.get("direct_gain_floor", _USER_DEFAULTS["direct_gain_floor"]),
        )
        cost = _cost(f"{name}.cost", raw["cost"], applied) if "cost" in raw else None
        users.append(
            section.build(
                UserSpec,
                profile=profile,
                arrival_rate=section.get("arrival_rate", _USER_DEFAULTS["arrival_rate"]),
                delay_bound=section.get("delay_bound", _USER_DEFAULTS["delay_bound"]),
                cost=cost,
            )
        )

    scenario = top.build(
        Scenario,
        users=tuple(users),
        radio=radio,
        control=control,
        horizon_slots=horizon,
        seed=seed,
        mode=mode,
        options=options,
    )
    if applied:
        logger.info("%s: applied defaults %s", source, ", ".join(applied))
    return ResolvedConfig(scenario, tuple(applied))


def read_config(path: str) -> ResolvedConfig:
    try:
        with open(path, "rb") as stream:
            data = tomllib.load(stream)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        # The decoder message carries the line and column.
        raise ConfigError(f"{path}: {exc}") from exc
    return parse_config(data, source=path)


def load_config(path: str) -> Scenario:
    """Read and validate a scenario file."""
    return read_config(path).scenario


def default_scenario(delay_bounds: Tuple[float, float] = (1.25, 3.0)) -> Scenario:
    """The two-user reference scenario, with user 1 delay-constrained by default."""
    users = [
        {"mean_interference_gain": 4.0, "delay_bound": delay_bounds[0]},
        {"mean_interference_gain": 2.0, "delay_bound": delay_bounds[1]},
    ]
    return parse_config({"users": users}, source="<defaults>").scenario


def _plain(value: Any) -> Any:
    if isinstance(value, Enum):
        return value.value
    if is_dataclass(value) and not isinstance(value, type):
        return _plain(asdict(value))
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    return value


def resolved_config(
    scenario: Scenario, applied_defaults: Optional[Tuple[str, ...]] = None
) -> Dict[str, Any]:
    """JSON-ready dictionary of every parameter that affects a run."""
    resolved: Dict[str, Any] = _plain(scenario)
    resolved["resolved_user_costs"] = [c.describe() for c in scenario.costs]
    if applied_defaults is not None:
        resolved["applied_defaults"] = list(applied_defaults)
    return resolved
