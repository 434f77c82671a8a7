"""
Slotted uplink simulator for delay-constrained secondary users.

Several secondary users share one uplink channel with a primary user. Each
slot at most one secondary user transmits, at the highest power that keeps the
interference at the primary receiver under a cap. Who transmits is decided by a
priority list that is rebuilt once per frame from per-user virtual queues,
which track how far each user's packet delays exceed a moving target. The
target trades a convex delay cost against the delay bound through the
parameter ``V``.

Typical use::

    from cognitive_delay_scheduler import default_scenario, run

    report = run(default_scenario().with_arrival_rate(0.4).with_horizon(200_000))
    print(report.per_user_delay, report.sum_cost)

The ``cognitive-delay-sim`` command runs the packaged experiment presets.
"""

from .__version__ import __version__
from .channel import FadingProfile, RadioParams
from .config import default_scenario, load_config
from .doic import ControlParams, DoicController
from .engine import CsiMode, Scenario, SimOptions, SimReport, SweepAxis, UserSpec, run, sweep
from .exceptions import SimulationError
from .metrics import CostSpec, build_curve, compare_curves

__all__ = [
    "ControlParams",
    "CostSpec",
    "CsiMode",
    "DoicController",
    "FadingProfile",
    "RadioParams",
    "Scenario",
    "SimOptions",
    "SimReport",
    "SimulationError",
    "SweepAxis",
    "UserSpec",
    "__version__",
    "build_curve",
    "compare_curves",
    "default_scenario",
    "load_config",
    "run",
    "sweep",
]
