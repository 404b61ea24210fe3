"""
coopsched: schedule-driven traffic signal control with cooperative speed advisories
"""

from .version import __version__

# high-level functions
from .clusters import Cluster, cluster_vehicles, combine_by_phase
from .scheduler import (
    IntersectionConfig,
    ScheduleState,
    advance_state,
    cumulative_delay,
    enforce_max_green,
    forward_dp,
    reschedule_largest_delay_batch,
)
from .cooperative import CoopConfig, plan_advisories
from .config import ScenarioConfig, load_scenario
from .experiments import aggregate, run_scenario, sweep
