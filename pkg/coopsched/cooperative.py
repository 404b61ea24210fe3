"""
Cooperative speed advisories on top of a computed schedule.

After the scheduler has produced a control flow, the approaching clusters are scanned in
schedule order. A cluster that would reach the stop line late relative to its permitted
start is asked to speed up, one that would arrive early and wait is asked to slow down.
Speed-ups at the tail of a phase let the next phase start earlier.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Mapping, NamedTuple, Optional, Tuple

from coopsched.exceptions import ConfigurationError
from coopsched.scheduler import ControlFlow, IntersectionConfig, advance_state, recost

LOG = logging.getLogger(__name__)


@dataclass
class CoopConfig:
    """Parameters of the speed advisory planner.

    Args:
        thr_up (float): Lower bound of the gamma band.
        thr_down (float): Upper bound of the gamma band.
        a_max (float): Maximum acceleration in m/s^2.
        omega (float): Acceleration exponent.
        v_limit (float): Speed limit in m/s.
        v_min (float): Lowest speed that may be advised, in m/s.
        advisory_horizon (float): Seconds over which an advised speed change must be
            achievable at ``a_max``. One replanning cycle by default.
    """

    thr_up: float = 0.6
    thr_down: float = 1.4
    a_max: float = 5.0
    omega: float = 4.0
    v_limit: float = 18.06
    v_min: float = 5.0
    advisory_horizon: float = 1.0

    def __post_init__(self):
        if not 0 < self.thr_up < 1 < self.thr_down:
            raise ConfigurationError(
                f"need 0 < thr_up < 1 < thr_down, got ({self.thr_up}, {self.thr_down})",
                field="cooperative.thr_up",
            )
        if not self.a_max > 0:
            raise ConfigurationError(f"must be > 0, got {self.a_max}", field="cooperative.a_max")
        if self.omega < 1:
            raise ConfigurationError(f"must be >= 1, got {self.omega}", field="cooperative.omega")
        if not 0 < self.v_min < self.v_limit:
            raise ConfigurationError(
                f"need 0 < v_min < v_limit, got ({self.v_min}, {self.v_limit})",
                field="cooperative.v_min",
            )
        if not self.advisory_horizon > 0:
            raise ConfigurationError(
                f"must be > 0, got {self.advisory_horizon}", field="cooperative.advisory_horizon"
            )


@dataclass(frozen=True)
class SpeedAdvisory:
    """An advised speed for the CAV members of one scheduled cluster."""

    cluster_index: int
    vehicles: Tuple[int, ...]
    speed: float
    issued_at: float


@dataclass(frozen=True)
class PhaseScan:
    """Bookkeeping recorded at every phase boundary of the scan."""

    p: int
    pst_p: float
    pst_prev: float
    end: float
    updated_end: float
    delta: float


class AdvisoryPlan(NamedTuple):
    advisories: List[SpeedAdvisory]
    flow: ControlFlow
    scans: List[PhaseScan]


def compute_gamma(arr: float, pst: float, now: float) -> Optional[float]:
    """Ratio of the time until arrival to the time until the permitted start.

    Returns None when the cluster is already at the stop line or its phase is
    already permitted.
    """
    if pst <= now or arr <= now:
        return None
    return (arr - now) / (pst - now)


def new_speed(v: float, gamma: float, config: CoopConfig) -> float:
    """IDM free-road acceleration term applied over one second, clamped to the speed range."""
    speed = v + config.a_max * (1.0 - gamma ** (-config.omega))
    return min(max(speed, config.v_min), config.v_limit)


def is_safe(v: float, v_new: float, config: CoopConfig) -> bool:
    """Whether the change from ``v`` to ``v_new`` is legal and reachable within the advisory horizon."""
    if not config.v_min <= v_new <= config.v_limit:
        return False
    return abs(v_new - v) <= config.a_max * config.advisory_horizon


def advisory_for_cluster(
    cluster,
    pst: float,
    v: float,
    now: float,
    updated_end: float,
    config: CoopConfig,
    arrival_window: Optional[Tuple[float, float]] = None,
) -> Tuple[Optional[float], float]:
    """Advised speed of one cluster and the updated finish of its phase.

    Args:
        cluster (Cluster): The scheduled cluster.
        pst (float): Its (possibly shifted) permitted start time.
        v (float): Current speed of its lead vehicle.
        now (float): Current time.
        updated_end (float): Latest advised arrival of the phase so far.
        config (CoopConfig): Advisory parameters.
        arrival_window (Tuple[float, float], optional): Bounds on the advised arrival. An
            advised arrival outside it is pulled back in and the speed recomputed.

    Returns:
        Tuple[Optional[float], float]: The advised speed, or None when the cluster keeps
            its speed, and the new ``updated_end``.
    """
    gamma = compute_gamma(cluster.arr, pst, now)
    if gamma is None or not config.thr_up < gamma < config.thr_down or v <= 0:
        return None, max(updated_end, cluster.arr)
    speed = new_speed(v, gamma, config)
    if speed == v:
        return speed, max(updated_end, cluster.arr)
    arr = v / speed * (cluster.arr - now) + now
    if arrival_window is not None:
        lo, hi = arrival_window
        clamped = min(max(arr, lo), hi)
        if clamped != arr:
            if clamped <= now:
                return None, max(updated_end, cluster.arr)
            arr = clamped
            speed = v * (cluster.arr - now) / (arr - now)
    if (gamma > 1 and not arr < cluster.arr) or (gamma < 1 and not arr > cluster.arr):
        return None, max(updated_end, cluster.arr)
    return speed, max(updated_end, arr)


def plan_advisories(
    flow: ControlFlow,
    speeds: Mapping[int, float],
    cav_flags: Mapping[int, bool],
    now: float,
    config: CoopConfig,
    schedule_config: IntersectionConfig,
) -> AdvisoryPlan:
    """Scan a fresh control flow and advise speeds to its clusters.

    Clusters are visited in schedule order. At every phase boundary the amount ``delta``
    by which the new phase may start earlier is derived from the advised arrivals of the
    previous phase. Each cluster then gets an advisory from ``advisory_for_cluster``.
    Advised arrivals are kept within the permitted start the cluster would get under the
    advisories already decided, so re-costing the revised flow never increases delay.
    An advisory is sent only when it is safe and the cluster has a CAV member.

    Args:
        flow (ControlFlow): The control flow computed this cycle.
        speeds (Mapping[int, float]): Current speed of every vehicle.
        cav_flags (Mapping[int, bool]): Whether a vehicle follows advisories.
        now (float): Current time.
        config (CoopConfig): Advisory parameters.
        schedule_config (IntersectionConfig): Timing parameters the flow was computed with.

    Returns:
        AdvisoryPlan: The advisories, the re-costed flow and the phase boundary records.
            The flow is returned as is when no advisory was issued.
    """
    advisories: List[SpeedAdvisory] = []
    scans: List[PhaseScan] = []
    revised = []
    state = flow.initial
    phase = None
    p = 0
    pst_prev = -math.inf
    end = updated_end = -math.inf
    delta = 0.0
    for i, entry in enumerate(flow.entries):
        cluster = entry.cluster
        if phase is None or entry.phase != phase or entry.new_run:
            pst_p = entry.pst
            phase = entry.phase
            delta = 0.0
            if end > pst_prev:
                delta = max(0.0, end - max(pst_prev, updated_end))
            if pst_p - delta <= pst_prev:
                delta = 0.0
            scans.append(PhaseScan(p, pst_p, pst_prev, end, updated_end, delta))
            end = updated_end = -math.inf
            pst_prev = pst_p
            p += 1
        pst = entry.pst - delta
        end = max(end, cluster.arr)

        _, planned = advance_state(state, entry.phase, cluster, schedule_config, new_run=entry.new_run)
        window = (planned.pst, math.inf) if cluster.arr > pst else (-math.inf, planned.pst)
        before = updated_end
        v = speeds.get(cluster.members[0], 0.0)
        speed, updated_end = advisory_for_cluster(cluster, pst, v, now, updated_end, config, window)

        cavs = tuple(m for m in cluster.members if cav_flags.get(m, False))
        if speed is not None and speed != v and cavs and is_safe(v, speed, config):
            advisories.append(SpeedAdvisory(i, cavs, speed, now))
            arrival = min(max(v / speed * (cluster.arr - now) + now, window[0]), window[1])
            cluster = cluster.shifted(arrival - cluster.arr)
        else:
            updated_end = max(before, entry.cluster.arr)
        revised.append(cluster)
        state, _ = advance_state(state, entry.phase, cluster, schedule_config, new_run=entry.new_run)

    if not advisories:
        return AdvisoryPlan([], flow, scans)
    LOG.debug(f"{len(advisories)} advisories at t={now:.1f}")
    return AdvisoryPlan(advisories, recost(flow, revised, schedule_config), scans)
