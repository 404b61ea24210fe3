"""
Deterministic fixed-timestep microscopic traffic simulation.

Vehicles follow the IDM within their lane. A stop line that may not be passed acts as a
standing virtual leader. Every control interval each intersection senses its entry
roads, clusters the approaching vehicles, schedules them and actuates the first phase
of the schedule. In cooperative mode it also sends speed advisories.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass
from typing import Deque, Dict, List, Optional, Tuple

import numpy as np

from coopsched.clusters import Observation, cluster_vehicles, combine_by_phase
from coopsched.config import ScenarioConfig
from coopsched.cooperative import plan_advisories
from coopsched.exceptions import CollisionError, ConfigurationError, CoopSchedError, SchedulingError
from coopsched.idm import IdmParams, idm_acceleration
from coopsched.network import (
    TURNS,
    RoadNetwork,
    RoadSegment,
    build_network,
    expected_road_flows,
    phase_flow_ratios,
)
from coopsched.scheduler import enforce_max_green, forward_dp, reschedule_largest_delay_batch
from coopsched.signals import FixedTimePlan, SignalController, webster_fixed_plan

LOG = logging.getLogger(__name__)

# vehicles slower than this (m/s) are sensed as queued
QUEUE_SPEED = 1.0
# distance (m) before the stop line where a vehicle without permission is held
STOP_MARGIN = 0.01

###################################################################################################
# Vehicles and arrivals
###################################################################################################


@dataclass
class Vehicle:
    """A vehicle on the network. ``x`` is the front bumper position on the current road."""

    id: int
    route: Tuple[str, ...]
    is_cav: bool
    t_gen: float
    free_flow_time: float
    leg: int = 0
    lane: int = 0
    x: float = 0.0
    v: float = 0.0
    v0: float = 0.0
    advisory: Optional[float] = None
    advised_from: float = 0.0
    committed: Optional[bool] = None
    target_lane: Optional[int] = None

    @property
    def road(self) -> str:
        return self.route[self.leg]

    @property
    def source(self) -> str:
        return self.route[0]


@dataclass(frozen=True)
class ExitRecord:
    vehicle: int
    source: str
    is_cav: bool
    t_gen: float
    t_exit: float
    delay: float


class ArrivalProcess:
    """Poisson arrivals at one source road, ``rate`` in vehicles per hour."""

    def __init__(self, road: str, rate: float, rng: np.random.Generator):
        if rate < 0:
            raise ConfigurationError(f"rate of {road} must be >= 0, got {rate}", field="demand.tiers")
        self.road = road
        self.rate = rate
        self.rng = rng
        self.next_time = self._draw(0.0)

    def _draw(self, after: float) -> float:
        if self.rate <= 0:
            return math.inf
        return after + self.rng.exponential(3600.0 / self.rate)

    def spawn_arrivals(self, until: float) -> List[float]:
        """Generation times of the vehicles arriving up to ``until``."""
        times = []
        while self.next_time <= until:
            times.append(self.next_time)
            self.next_time = self._draw(self.next_time)
        return times


def draw_route(network: RoadNetwork, source: str, turning: Dict[str, float], rng: np.random.Generator) -> Tuple[str, ...]:
    """Random route from ``source`` to an exit road."""
    probs = [turning[t] for t in TURNS]
    route = [source]
    while network.roads[route[-1]].movements:
        turn = TURNS[rng.choice(len(TURNS), p=probs)]
        route.append(network.roads[route[-1]].movements[turn])
    return tuple(route)


###################################################################################################
# World
###################################################################################################


class World:
    """The state of one simulation run.

    Args:
        config (ScenarioConfig): The scenario.
        seed (int): Seed of the arrival streams. Each source road gets its own stream.
    """

    def __init__(self, config: ScenarioConfig, seed: int):
        self.config = config
        self.seed = seed
        self.network = build_network(config.geometry)
        self.idm: IdmParams = config.idm
        self.vehicle_length = config.geometry.vehicle_length
        self.turning = config.demand.turning.as_dict()
        self.intersection_config = config.signals.intersection_config(phase_count=2)

        self.lanes: Dict[str, List[List[Vehicle]]] = {
            rid: [[] for _ in range(road.lanes)] for rid, road in self.network.roads.items()
        }
        rates = self.network.source_rates(config.demand)
        sources = sorted(rates)
        streams = np.random.SeedSequence(seed).spawn(len(sources))
        self.arrivals = {
            rid: ArrivalProcess(rid, rates[rid], np.random.default_rng(stream))
            for rid, stream in zip(sources, streams)
        }
        self.backlog: Dict[str, Deque[Vehicle]] = {rid: deque() for rid in sources}
        self._next_lane = {rid: 0 for rid in sources}

        self.controllers = {
            iid: SignalController(
                iid,
                self.intersection_config,
                yellow=config.signals.yellow,
                cap_green=config.controller != "fixed",
            )
            for iid in sorted(self.network.intersections)
        }
        self.plans: Dict[str, FixedTimePlan] = {}
        if config.controller == "fixed":
            flows = expected_road_flows(self.network, rates, self.turning)
            for iid in self.controllers:
                ratios = phase_flow_ratios(self.network, iid, flows, config.signals.service_time)
                self.plans[iid] = webster_fixed_plan(
                    ratios, self.intersection_config, config.signals.min_cycle, config.signals.max_cycle
                )
                LOG.debug(f"{iid}: fixed plan greens {self.plans[iid].greens}, cycle {self.plans[iid].cycle:.1f}s")

        self.steps = 0
        self.time = 0.0
        self.spawned = 0
        self.advisories_sent = 0
        self.exit_log: List[ExitRecord] = []
        self._vehicle_ids = 0
        self._reserved: Dict[Tuple[str, int], int] = {}

    ###############################################################################################
    # Queries
    ###############################################################################################

    def vehicles(self, road: Optional[str] = None) -> List[Vehicle]:
        roads = [road] if road is not None else sorted(self.lanes)
        return [veh for rid in roads for lane in self.lanes[rid] for veh in lane]

    @property
    def on_road(self) -> int:
        return sum(len(lane) for lanes in self.lanes.values() for lane in lanes)

    @property
    def waiting(self) -> int:
        return sum(len(q) for q in self.backlog.values())

    ###############################################################################################
    # Simulation loop
    ###############################################################################################

    def run(self, duration: Optional[float] = None) -> "World":
        """Simulate until ``duration`` (the scenario duration by default)."""
        duration = self.config.duration if duration is None else duration
        per_control = int(round(self.config.control_interval / self.config.dt))
        total = int(round(duration / self.config.dt))
        while self.steps < total:
            if self.steps % per_control == 0:
                for iid in self.controllers:
                    self.control_tick(iid, self.time)
            self.step(self.config.dt)
        return self

    def step(self, dt: float) -> "World":
        """Advance vehicles, signals and arrivals by one timestep."""
        end = (self.steps + 1) * dt
        self._reserved = {}
        moves = []
        for rid in sorted(self.lanes):
            for lane in self.lanes[rid]:
                for i, veh in enumerate(lane):
                    moves.append((veh, *self._acceleration(veh, lane[i - 1] if i > 0 else None)))
        for veh, accel, cap in moves:
            road = self.network.roads[veh.road]
            accel = min(max(accel, -self.idm.max_decel), self.idm.a_max)
            v = min(max(0.0, veh.v + accel * dt), road.speed_limit)
            if cap is not None:
                v = min(v, max(0.0, cap))
            veh.v = v
            veh.x += v * dt
        self._check_gaps(end)
        self._cross(end)
        self._spawn(end)
        for controller in self.controllers.values():
            controller.advance(dt)
        self.steps += 1
        self.time = end
        if self.config.check_invariants:
            self.check_invariants()
        return self

    def _acceleration(self, veh: Vehicle, leader: Optional[Vehicle]) -> Tuple[float, Optional[float]]:
        """IDM acceleration and a cap on the next speed of a front vehicle.

        A front vehicle that may reach its stop line within the step reserves the lane it
        will enter, so that two vehicles never enter the same lane in one step. It follows
        the rear vehicle of that lane across the line and may not close up on it. When no
        lane has more than ``s0`` free at its upstream end the vehicle is held as at red.
        """
        road = self.network.roads[veh.road]
        if leader is not None:
            return self._idm(veh, leader.x - self.vehicle_length - veh.x, veh.v - leader.v), None
        if road.is_exit:
            return self._idm(veh, math.inf, 0.0), None
        dt = self.config.dt
        if self._permitted(veh, road):
            nxt = veh.route[veh.leg + 1]
            lane = self._entry_lane(nxt)
            rear = self._rear(nxt, lane) if lane is not None else None
            room = rear.x - self.vehicle_length if rear is not None else math.inf
            if lane is not None and room > self.idm.s0:
                if veh.x + (veh.v + self.idm.a_max * dt) * dt >= road.length:
                    self._reserved[(nxt, lane)] = veh.id
                    veh.target_lane = lane
                if rear is None:
                    return self._idm(veh, math.inf, 0.0), None
                gap = road.length - veh.x + room
                return self._idm(veh, gap, veh.v - rear.v), (gap - STOP_MARGIN) / dt
        gap = road.length - veh.x
        cap = (road.length - STOP_MARGIN - veh.x) / dt
        return self._idm(veh, gap, veh.v), cap

    def _idm(self, veh: Vehicle, gap: float, dv: float) -> float:
        try:
            return idm_acceleration(veh.v, gap, dv, self.idm, v0=veh.v0)
        except CollisionError:
            raise CollisionError(veh.road, (veh.id,), self.time, gap) from None

    def _permitted(self, veh: Vehicle, road: RoadSegment) -> bool:
        """Whether the front vehicle of an entry road may pass its stop line.

        At the onset of yellow a vehicle that cannot stop at the comfortable deceleration
        commits to crossing and may still cross during all-red.
        """
        controller = self.controllers[road.intersection]
        if controller.is_green(road.phase):
            veh.committed = None
            return True
        if veh.committed is None and controller.is_yellow(road.phase):
            distance = road.length - veh.x
            veh.committed = distance <= 0 or veh.v * veh.v / (2.0 * distance) > self.idm.b
        return bool(veh.committed)

    def _rear(self, road: str, lane: int) -> Optional[Vehicle]:
        vehicles = self.lanes[road][lane]
        return vehicles[-1] if vehicles else None

    def _entry_lane(self, road: str) -> Optional[int]:
        """The unreserved lane of ``road`` with the most room at its upstream end."""
        best, room = None, -math.inf
        for i, lane in enumerate(self.lanes[road]):
            if (road, i) in self._reserved:
                continue
            space = lane[-1].x if lane else math.inf
            if space > room:
                best, room = i, space
        return best

    def _check_gaps(self, time: float):
        for rid, lanes in self.lanes.items():
            for lane in lanes:
                for leader, follower in zip(lane, lane[1:]):
                    gap = leader.x - self.vehicle_length - follower.x
                    if gap <= 0:
                        raise CollisionError(rid, (follower.id, leader.id), time, gap)

    def _cross(self, end: float):
        for rid in sorted(self.lanes):
            road = self.network.roads[rid]
            for lane in self.lanes[rid]:
                while lane and lane[0].x >= road.length:
                    veh = lane.pop(0)
                    overshoot = veh.x - road.length
                    if road.is_exit:
                        t_exit = end - overshoot / veh.v if veh.v > 0 else end
                        self.exit_log.append(
                            ExitRecord(
                                veh.id, veh.source, veh.is_cav, veh.t_gen, t_exit,
                                t_exit - veh.t_gen - veh.free_flow_time,
                            )
                        )
                        continue
                    nxt = veh.route[veh.leg + 1]
                    veh.leg += 1
                    veh.lane = veh.target_lane if veh.target_lane is not None else self._entry_lane(nxt) or 0
                    veh.target_lane = None
                    veh.x = overshoot
                    veh.advisory = None
                    veh.committed = None
                    veh.v0 = min(self.idm.v0, self.network.roads[nxt].speed_limit)
                    rear = self._rear(nxt, veh.lane)
                    if rear is not None and rear.x - self.vehicle_length - veh.x <= 0:
                        raise CollisionError(nxt, (veh.id, rear.id), end, rear.x - self.vehicle_length - veh.x)
                    self.lanes[nxt][veh.lane].append(veh)

    def _spawn(self, end: float):
        for rid, process in self.arrivals.items():
            for t_gen in process.spawn_arrivals(end):
                route = draw_route(self.network, rid, self.turning, process.rng)
                is_cav = process.rng.random() < self.config.penetration
                self.backlog[rid].append(
                    Vehicle(
                        id=self._vehicle_ids,
                        route=route,
                        is_cav=bool(is_cav),
                        t_gen=t_gen,
                        free_flow_time=self.network.free_flow_time(route),
                    )
                )
                self._vehicle_ids += 1
                self.spawned += 1
            self._insert_backlog(rid, end)

    def _insert_backlog(self, rid: str, end: float):
        road = self.network.roads[rid]
        queue = self.backlog[rid]
        while queue:
            veh = queue[0]
            for offset in range(road.lanes):
                li = (self._next_lane[rid] + offset) % road.lanes
                rear = self._rear(rid, li)
                space = rear.x - self.vehicle_length if rear is not None else math.inf
                if space <= self.idm.s0 + 1.0:
                    continue
                v = min(road.speed_limit, self.idm.v0, (space - self.idm.s0) / self.idm.T)
                lag = min(end - veh.t_gen, self.config.dt)
                veh.lane = li
                veh.v = v
                veh.v0 = min(self.idm.v0, road.speed_limit)
                veh.x = min(v * lag, space - self.idm.s0 - 1.0)
                self.lanes[rid][li].append(veh)
                self._next_lane[rid] = (li + 1) % road.lanes
                queue.popleft()
                break
            else:
                return

    ###############################################################################################
    # Control
    ###############################################################################################

    def sense(self, intersection: str, now: float) -> Dict[str, List[Observation]]:
        """Predicted arrival and clearance of every vehicle on the entry roads.

        Queued vehicles discharge one ``service_time`` apart per lane, starting now. A
        moving vehicle arrives after ``distance / speed`` but not before the vehicle
        ahead of it in its lane has been served.
        """
        service = self.config.signals.service_time
        observations = {}
        for rid in self.network.intersections[intersection].entry_roads:
            road = self.network.roads[rid]
            obs = []
            for lane in self.lanes[rid]:
                previous = -math.inf
                for veh in lane:
                    if veh.v < QUEUE_SPEED:
                        arr = max(now, previous + service)
                    else:
                        arr = max(now + max(0.0, road.length - veh.x) / veh.v, previous + service)
                    obs.append(Observation(veh.id, arr, arr + service))
                    previous = arr
            observations[rid] = obs
        return observations

    def control_tick(self, intersection: str, now: float):
        """Replan one intersection and actuate the first phase of the new schedule.

        Raises:
            ConfigurationError: If the intersection cannot be scheduled, naming the
                intersection and the time.
        """
        controller = self.controllers[intersection]
        if self.config.controller == "fixed":
            controller.request(self.plans[intersection].phase_at(now), now)
            return

        node = self.network.intersections[intersection]
        schedule_config = self.intersection_config
        if self.config.controller == "coop":
            for rid, phase in node.phase_map.items():
                if controller.is_green(phase):
                    for veh in self.vehicles(rid):
                        if veh.advisory is not None:
                            veh.advisory = None
                            veh.v0 = min(self.idm.v0, self.network.roads[rid].speed_limit)

        observations = self.sense(intersection, now)
        sequences = []
        for rid, obs in observations.items():
            horizon = self.network.roads[rid].free_flow_time
            sequences.append(
                cluster_vehicles(obs, self.config.interval, road=rid, horizon=horizon, horizon_end=now + horizon)
            )
        inputs = combine_by_phase(sequences, node.phase_map)
        try:
            flow = forward_dp(inputs, controller.schedule_state(now), schedule_config)
            if self.config.batch_reschedule:
                flow = reschedule_largest_delay_batch(flow, inputs, schedule_config)
            flow = enforce_max_green(flow, inputs, schedule_config)
        except (ConfigurationError, SchedulingError) as e:
            raise ConfigurationError(f"intersection {intersection} at t={now:.1f}s: {e}") from e

        if self.config.controller == "coop" and flow.entries:
            vehicles = {veh.id: veh for rid in node.entry_roads for veh in self.vehicles(rid)}
            plan = plan_advisories(
                flow,
                {vid: veh.v for vid, veh in vehicles.items()},
                {vid: veh.is_cav for vid, veh in vehicles.items()},
                now,
                self.config.cooperative,
                schedule_config,
            )
            for advisory in plan.advisories:
                for vid in advisory.vehicles:
                    veh = vehicles[vid]
                    limit = self.network.roads[veh.road].speed_limit
                    veh.advisory = min(max(advisory.speed, self.config.cooperative.v_min), limit)
                    veh.advised_from = veh.v
                    veh.v0 = veh.advisory
            self.advisories_sent += len(plan.advisories)

        controller.conflicting_demand = any(
            e.phase != controller.phase or e.new_run for e in flow.entries
        )
        if flow.entries:
            controller.request(flow.entries[0].phase, now)
        LOG.debug(
            f"{intersection} t={now:.1f}: {len(flow.entries)} clusters, delay {flow.delay:.1f}, "
            f"phase {controller.phase}{' (changeover)' if controller.in_changeover else ''}"
        )

    ###############################################################################################
    # Checks
    ###############################################################################################

    def check_invariants(self):
        """Raise if vehicles were lost or overlap, a CAV outran its advice, or a signal broke its timing."""
        if self.spawned != self.on_road + self.waiting + len(self.exit_log):
            raise CoopSchedError(
                f"vehicle conservation violated at t={self.time:.1f}: spawned {self.spawned}, "
                f"on road {self.on_road}, waiting {self.waiting}, exited {len(self.exit_log)}"
            )
        self._check_gaps(self.time)
        for rid, lanes in self.lanes.items():
            road = self.network.roads[rid]
            for lane in lanes:
                for veh in lane:
                    if not 0 <= veh.v <= road.speed_limit + 1e-9:
                        raise CoopSchedError(f"vehicle {veh.id} speed {veh.v:.2f} outside [0, {road.speed_limit}]")
                    if not 0 <= veh.x < road.length:
                        raise CoopSchedError(f"vehicle {veh.id} at {veh.x:.2f} outside road {rid}")
                    # an advised CAV may brake towards its advice but never speed past it
                    if veh.advisory is not None:
                        ceiling = max(veh.advisory, veh.advised_from) + self.idm.a_max * self.config.dt
                        if veh.v > ceiling + 1e-9:
                            raise CoopSchedError(
                                f"vehicle {veh.id} at {veh.v:.2f} m/s exceeds its advisory {veh.advisory:.2f} m/s"
                            )
        for controller in self.controllers.values():
            controller.check_log()
            limit = controller.config.max_green[controller.phase]
            if controller.cap_green and not controller.in_changeover and controller.elapsed > limit + 1e-9:
                raise CoopSchedError(
                    f"{controller.intersection}: phase {controller.phase} green for {controller.elapsed:.1f}s "
                    f"beyond max green {limit}s"
                )
