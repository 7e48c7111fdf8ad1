"""Age-of-information aware scheduling and power control for a multi-antenna roadside unit."""

from ._validation import InfeasibleError, ValidationError
from .aoi import aoi_lower_bound, aoi_upper_bound, objective
from .dqn import DQNScheduler
from .scenario import Scenario, build_scenario, toy_scenario
from .schedulers import ACOScheduler, ExhaustiveScheduler, RandomScheduler
from .simulate import SolveResult, replay

__version__ = "0.1.0"

__all__ = [
    "ACOScheduler",
    "DQNScheduler",
    "ExhaustiveScheduler",
    "InfeasibleError",
    "RandomScheduler",
    "Scenario",
    "SolveResult",
    "ValidationError",
    "aoi_lower_bound",
    "aoi_upper_bound",
    "build_scenario",
    "objective",
    "replay",
    "toy_scenario",
]
