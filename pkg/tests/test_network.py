import pytest

from coopsched.config import DemandConfig, GeometryConfig
from coopsched.exceptions import ConfigurationError
from coopsched.network import (
    MAIN_PHASE,
    SIDE_PHASE,
    RoadNetwork,
    RoadSegment,
    build_arterial,
    build_network,
    build_single_intersection,
    expected_road_flows,
    phase_flow_ratios,
)

TURNING = {"straight": 0.8, "left": 0.1, "right": 0.1}


def test_single_intersection_layout():
    network = build_single_intersection(GeometryConfig())
    assert list(network.intersections) == ["I0"]
    node = network.intersections["I0"]
    assert node.phase_map == {"W_in": MAIN_PHASE, "E_in": MAIN_PHASE, "I0:N_in": SIDE_PHASE, "I0:S_in": SIDE_PHASE}
    assert network.roads["W_in"].lanes == 2
    assert network.roads["I0:N_in"].lanes == 1
    assert network.roads["W_in"].movements["straight"] == "E_out"
    assert network.roads["E_out"].is_exit
    assert set(network.sources) == {"W_in", "E_in", "I0:N_in", "I0:S_in"}


def test_arterial_links_intersections():
    network = build_arterial(GeometryConfig(intersections=3, link_length=300.0))
    assert sorted(network.intersections) == ["I0", "I1", "I2"]
    assert network.roads["I0>I1"].length == 300.0
    assert network.roads["I0>I1"].intersection == "I1"
    assert network.roads["I1>I0"].intersection == "I0"
    assert network.roads["W_in"].movements["straight"] == "I0>I1"
    assert network.roads["I1>I2"].movements["straight"] == "E_out"
    assert network.roads["E_in"].intersection == "I2"
    assert len(network.sources) == 2 + 2 * 3


def test_build_network_picks_the_layout():
    assert len(build_network(GeometryConfig()).intersections) == 1
    assert len(build_network(GeometryConfig(intersections=2)).intersections) == 2


def test_free_flow_time():
    network = build_single_intersection(GeometryConfig())
    assert network.free_flow_time(("W_in", "E_out")) == pytest.approx(600.0 / 18.06)


def test_source_rates_follow_the_demand_tier():
    network = build_single_intersection(GeometryConfig())
    rates = network.source_rates(DemandConfig(tier="med"))
    assert rates["W_in"] == 750.0
    assert rates["I0:N_in"] == pytest.approx(300.0)


def test_expected_flows_conserve_vehicles():
    network = build_single_intersection(GeometryConfig())
    rates = network.source_rates(DemandConfig(tier="high"))
    flows = expected_road_flows(network, rates, TURNING)
    assert flows["W_in"] == 1250.0
    assert flows["E_out"] == pytest.approx(0.8 * 1250 + 0.1 * 500 + 0.1 * 500)
    exits = sum(flows[rid] for rid, road in network.roads.items() if road.is_exit)
    assert exits == pytest.approx(sum(rates.values()))


def test_expected_flows_reach_downstream_intersections():
    network = build_arterial(GeometryConfig(intersections=3))
    flows = expected_road_flows(network, network.source_rates(DemandConfig(tier="low")), TURNING)
    assert flows["I0>I1"] > 0.8 * 363.0
    assert flows["I2:N_out"] > 0


def test_phase_flow_ratios():
    network = build_single_intersection(GeometryConfig())
    flows = expected_road_flows(network, network.source_rates(DemandConfig()), TURNING)
    ratios = phase_flow_ratios(network, "I0", flows, service_time=2.0)
    assert ratios[MAIN_PHASE] == pytest.approx(1250.0 / (2 * 1800.0))
    assert ratios[SIDE_PHASE] == pytest.approx(500.0 / 1800.0)


def test_network_validation():
    with pytest.raises(ConfigurationError):
        RoadSegment("a", 0.0, 1, 10.0)
    road = RoadSegment("a", 100.0, 1, 10.0, movements={"straight": "nowhere"})
    with pytest.raises(ConfigurationError):
        RoadNetwork({"a": road}, {}, {})
