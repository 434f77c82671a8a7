"""Error hierarchy shared by the simulator modules."""

__all__ = [
    "ConfigError",
    "GridMismatchError",
    "InvariantViolation",
    "NoPacketsServedError",
    "ParameterError",
    "SimulationError",
    "StabilityRegionError",
]


class SimulationError(Exception):
    """Root of every error raised by cognitive_delay_scheduler."""


class ConfigError(SimulationError, ValueError):
    """A configuration file could not be parsed or failed validation."""


class ParameterError(SimulationError, ValueError):
    """A domain type was constructed with values outside its invariants."""


class NoPacketsServedError(SimulationError):
    """An average delay was requested from a queue that served nothing."""


class StabilityRegionError(SimulationError):
    """The offered load lies outside the region where a formula is defined."""


class GridMismatchError(SimulationError, ValueError):
    """Two curves were compared over different x-grids."""


class InvariantViolation(SimulationError):
    """A hard run-time invariant tripped; the run is aborted."""
