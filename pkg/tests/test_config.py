# ruff: noqa: S101, INP001, PLR2004
"""TOML scenario loading, defaults and validation messages."""

import json
from pathlib import Path

import pytest

from cognitive_delay_scheduler.config import (
    default_scenario,
    load_config,
    parse_config,
    read_config,
    resolved_config,
)
from cognitive_delay_scheduler.engine import CsiMode, StarvationPolicy
from cognitive_delay_scheduler.exceptions import ConfigError
from cognitive_delay_scheduler.metrics import CostKind

DEFAULT_TOML = Path(__file__).resolve().parent.parent / "configs" / "default.toml"

MINIMAL = """
[[users]]
mean_interference_gain = 4.0

[[users]]
mean_interference_gain = 2.0
"""


def _write(tmp_path, text):
    path = tmp_path / "scenario.toml"
    path.write_text(text, encoding="utf-8")
    return str(path)


def _users(*extra):
    return [{"mean_interference_gain": 4.0, **e} for e in extra] or [{"mean_interference_gain": 4.0}]


def test_shipped_config_is_the_reference_scenario():
    scenario = load_config(str(DEFAULT_TOML))
    assert scenario == default_scenario()
    assert [u.delay_bound for u in scenario.users] == [1.25, 3.0]
    assert [u.profile.mean_interference_gain for u in scenario.users] == [4.0, 2.0]
    assert scenario.horizon_slots == 2_000_000


def test_minimal_file_fills_in_defaults(tmp_path):
    resolved = read_config(_write(tmp_path, MINIMAL))
    scenario = resolved.scenario
    assert scenario.n_users == 2
    assert scenario.control.v == 1000.0
    assert scenario.radio.interference_cap == 5.0
    assert "users[0].direct_gain_floor=0.001" in resolved.applied_defaults
    assert "control.v=1000.0" in resolved.applied_defaults
    assert not any(d.startswith("users[0].mean_interference_gain") for d in resolved.applied_defaults)


def test_non_positive_v_is_rejected():
    with pytest.raises(ConfigError, match=r"\[control\] v must be positive"):
        parse_config({"control": {"v": 0}, "users": _users()})


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config({"users": _users(), "colour": "blue"})
    with pytest.raises(ConfigError, match=r"\[radio\] unknown key\(s\): power"):
        parse_config({"radio": {"power": 3.0}, "users": _users()})
    with pytest.raises(ConfigError, match=r"users\[1\]"):
        parse_config({"users": _users({}, {"gain": 1.0})})


def test_missing_users_or_required_keys():
    with pytest.raises(ConfigError, match="at least one user"):
        parse_config({})
    with pytest.raises(ConfigError, match="missing required key mean_interference_gain"):
        parse_config({"users": [{"arrival_rate": 0.3}]})


def test_type_errors_name_the_key():
    with pytest.raises(ConfigError, match=r"\[top\] seed must be an integer"):
        parse_config({"seed": 1.5, "users": _users()})
    with pytest.raises(ConfigError, match="arrival_rate must be a number"):
        parse_config({"users": _users({"arrival_rate": "fast"})})
    with pytest.raises(ConfigError, match="must be a table"):
        parse_config({"radio": 3, "users": _users()})


def test_toml_syntax_error_reports_the_line(tmp_path):
    with pytest.raises(ConfigError, match="line"):
        read_config(_write(tmp_path, "seed = \n[[users]]\n"))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config"):
        read_config(str(tmp_path / "nope.toml"))


def test_short_horizons_are_rejected():
    with pytest.raises(ConfigError, match="horizon_slots must be at least 10000"):
        parse_config({"horizon_slots": 500, "users": _users()})


def test_imperfect_mode_defaults():
    scenario = parse_config({"mode": "imperfect_csi", "users": _users()}).scenario
    assert scenario.mode is CsiMode.IMPERFECT
    assert scenario.radio.csi_backoff == 1.1
    assert scenario.radio.csi_error_bound == 0.1


def test_mode_must_match_the_radio():
    with pytest.raises(ConfigError, match="imperfect_csi mode requires"):
        parse_config(
            {"mode": "imperfect_csi", "radio": {"csi_error_bound": 0.0}, "users": _users()}
        )
    with pytest.raises(ConfigError, match="mode must be one of"):
        parse_config({"mode": "oracle", "users": _users()})


def test_per_user_costs_and_enums():
    data = {
        "simulation": {"starvation_policy": "skip"},
        "users": _users({"cost": {"kind": "exp", "rate": 2.0}}, {}),
    }
    scenario = parse_config(data).scenario
    assert scenario.options.starvation_policy is StarvationPolicy.SKIP
    assert scenario.costs[0].kind is CostKind.EXP
    assert scenario.costs[0].rate == 2.0
    assert scenario.costs[1] == scenario.control.cost


def test_non_convex_cost_is_a_config_error():
    with pytest.raises(ConfigError, match=r"\[control.cost\]"):
        parse_config({"control": {"cost": {"exponent": 0.5}}, "users": _users()})


def test_resolved_config_is_json_ready(tmp_path):
    resolved = read_config(_write(tmp_path, MINIMAL))
    document = resolved_config(resolved.scenario, resolved.applied_defaults)
    text = json.dumps(document)
    decoded = json.loads(text)
    assert decoded["mode"] == "perfect_csi"
    assert decoded["resolved_user_costs"][0] == resolved.scenario.costs[0].describe()
    assert decoded["applied_defaults"] == list(resolved.applied_defaults)
    assert len(decoded["users"]) == 2
