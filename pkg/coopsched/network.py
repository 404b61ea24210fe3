"""
Road network of a scenario: roads, intersections and turning movements.
"""

from dataclasses import dataclass, field, replace
from typing import Dict, List, Mapping, Optional, Tuple

from coopsched.config import DemandConfig, GeometryConfig
from coopsched.exceptions import ConfigurationError

TURNS = ("straight", "left", "right")
MAIN_PHASE = 0
SIDE_PHASE = 1


@dataclass
class RoadSegment:
    """One directed road.

    Entry roads end at the stop line of ``intersection`` and are served by ``phase``.
    Exit roads have no intersection and no movements.
    """

    id: str
    length: float
    lanes: int
    speed_limit: float
    intersection: Optional[str] = None
    phase: Optional[int] = None
    movements: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigurationError(f"road {self.id}: must be > 0, got {self.length}", field="geometry.length")
        if not self.speed_limit > 0:
            raise ConfigurationError(f"road {self.id}: must be > 0", field="geometry.speed_limit")

    @property
    def free_flow_time(self) -> float:
        return self.length / self.speed_limit

    @property
    def is_exit(self) -> bool:
        return self.intersection is None


@dataclass
class Intersection:
    id: str
    phase_map: Dict[str, int]
    phase_count: int = 2

    @property
    def entry_roads(self) -> List[str]:
        return list(self.phase_map)


@dataclass
class RoadNetwork:
    """Roads and intersections. ``sources`` maps every source road to ``main`` or ``side``."""

    roads: Dict[str, RoadSegment]
    intersections: Dict[str, Intersection]
    sources: Dict[str, str]

    def __post_init__(self):
        for road in self.roads.values():
            for turn, target in road.movements.items():
                if target not in self.roads:
                    raise ConfigurationError(f"road {road.id} turns {turn} into unknown road {target}", field="network")
        for source in self.sources:
            if source not in self.roads:
                raise ConfigurationError(f"unknown source road {source}", field="network")

    def source_rates(self, demand: DemandConfig) -> Dict[str, float]:
        return {
            road: demand.main_rate if kind == "main" else demand.side_rate
            for road, kind in self.sources.items()
        }

    def free_flow_time(self, route) -> float:
        return sum(self.roads[r].free_flow_time for r in route)


def _build_corridor(geometry: GeometryConfig) -> RoadNetwork:
    n = geometry.intersections
    limit = geometry.speed_limit
    roads: Dict[str, RoadSegment] = {}
    intersections: Dict[str, Intersection] = {}

    def road(rid, length, lanes, intersection=None, phase=None):
        roads[rid] = RoadSegment(rid, length, lanes, limit, intersection, phase)
        return roads[rid]

    def eb_in(k):
        return "W_in" if k == 0 else f"I{k - 1}>I{k}"

    def eb_out(k):
        return "E_out" if k == n - 1 else f"I{k}>I{k + 1}"

    def wb_in(k):
        return "E_in" if k == n - 1 else f"I{k + 1}>I{k}"

    def wb_out(k):
        return "W_out" if k == 0 else f"I{k}>I{k - 1}"

    def main_length(rid):
        return geometry.approach_length if rid in ("W_in", "E_in") else geometry.link_length

    for k in range(n):
        iid = f"I{k}"
        eb = road(eb_in(k), main_length(eb_in(k)), geometry.main_lanes, iid, MAIN_PHASE)
        wb = road(wb_in(k), main_length(wb_in(k)), geometry.main_lanes, iid, MAIN_PHASE)
        north = road(f"{iid}:N_in", geometry.side_length, geometry.side_lanes, iid, SIDE_PHASE)
        south = road(f"{iid}:S_in", geometry.side_length, geometry.side_lanes, iid, SIDE_PHASE)
        road(f"{iid}:N_out", geometry.exit_length, geometry.side_lanes)
        road(f"{iid}:S_out", geometry.exit_length, geometry.side_lanes)
        eb.movements = {"straight": eb_out(k), "left": f"{iid}:N_out", "right": f"{iid}:S_out"}
        wb.movements = {"straight": wb_out(k), "left": f"{iid}:S_out", "right": f"{iid}:N_out"}
        north.movements = {"straight": f"{iid}:S_out", "left": eb_out(k), "right": wb_out(k)}
        south.movements = {"straight": f"{iid}:N_out", "left": wb_out(k), "right": eb_out(k)}
        intersections[iid] = Intersection(
            iid, {r.id: r.phase for r in (eb, wb, north, south)}, phase_count=2
        )
    road("E_out", geometry.exit_length, geometry.main_lanes)
    road("W_out", geometry.exit_length, geometry.main_lanes)

    sources = {"W_in": "main", "E_in": "main"}
    for k in range(n):
        sources[f"I{k}:N_in"] = "side"
        sources[f"I{k}:S_in"] = "side"
    return RoadNetwork(roads, intersections, sources)


def build_single_intersection(geometry: GeometryConfig) -> RoadNetwork:
    """A two-way main road crossing a two-way side street at one signal."""
    return _build_corridor(replace(geometry, intersections=1))


def build_arterial(geometry: GeometryConfig) -> RoadNetwork:
    """A main road through ``geometry.intersections`` signals linked by ``link_length`` roads."""
    return _build_corridor(geometry)


def build_network(geometry: GeometryConfig) -> RoadNetwork:
    if geometry.intersections == 1:
        return build_single_intersection(geometry)
    return build_arterial(geometry)


def expected_road_flows(
    network: RoadNetwork, source_rates: Mapping[str, float], turning: Mapping[str, float]
) -> Dict[str, float]:
    """Steady-state flow of every road in veh/h.

    Source rates are pushed downstream through the turning proportions.
    """
    flows = {rid: 0.0 for rid in network.roads}

    def push(rid: str, rate: float, depth: int):
        if depth > len(network.roads):
            raise ConfigurationError(f"routes through road {rid} never leave the network", field="network")
        flows[rid] += rate
        for turn, target in network.roads[rid].movements.items():
            push(target, rate * turning.get(turn, 0.0), depth + 1)

    for rid, rate in source_rates.items():
        push(rid, rate, 0)
    return flows


def phase_flow_ratios(
    network: RoadNetwork, intersection: str, flows: Mapping[str, float], service_time: float
) -> List[float]:
    """Critical flow ratio ``y_i`` of every phase of an intersection.

    The saturation flow of a lane is one vehicle per ``service_time``.
    """
    node = network.intersections[intersection]
    saturation = 3600.0 / service_time
    ratios = [0.0] * node.phase_count
    for rid, phase in node.phase_map.items():
        road = network.roads[rid]
        ratios[phase] = max(ratios[phase], flows[rid] / (road.lanes * saturation))
    return ratios
