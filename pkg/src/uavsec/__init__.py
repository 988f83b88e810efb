"""Secrecy-rate-optimal UAV placement and trajectory planning."""

from .channel import ColludeMode, Placement, secrecy_rate
from .placement import StaticSolution, solve_static
from .planner import PlanResult, fly_hover_fly_init, plan_benchmark, plan_full3d
from .power import PowerSchedule, SlotGains, kkt_power, slot_gains
from .scenario import (Scenario, Trajectory, load_scenario, save_scenario,
                       validate_trajectory)

__version__ = "0.1.0"

__all__ = [
    "ColludeMode", "Placement", "secrecy_rate",
    "StaticSolution", "solve_static",
    "PlanResult", "fly_hover_fly_init", "plan_benchmark", "plan_full3d",
    "PowerSchedule", "SlotGains", "kkt_power", "slot_gains",
    "Scenario", "Trajectory", "load_scenario", "save_scenario",
    "validate_trajectory",
    "__version__",
]
