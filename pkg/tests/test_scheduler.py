import itertools

import numpy as np
import pytest

from coopsched.clusters import Cluster, Observation, cluster_vehicles, combine_by_phase
from coopsched.exceptions import ConfigurationError
from coopsched.scheduler import (
    ControlFlow,
    IntersectionConfig,
    ScheduleState,
    advance_state,
    cumulative_delay,
    enforce_max_green,
    forward_dp,
    recost,
    reschedule_largest_delay_batch,
)


def _cluster(count, arr, dep, first=0):
    return Cluster(count=count, arr=arr, dep=dep, members=tuple(range(first, first + count)))


def _platoon(first, arr, count, service=2.0):
    return Cluster.from_observations(
        [Observation(first + j, arr + service * j, arr + service * (j + 1)) for j in range(count)]
    )


def _inputs(jobs):
    """Input sequence with the given phase job lists, one road per phase."""
    sequences, phase_map = [], {}
    for phase, clusters in jobs.items():
        road = f"r{phase}"
        obs = [o for c in clusters for o in c.vehicle_observations()]
        sequences.append(cluster_vehicles(obs, 0.0, road=road))
        phase_map[road] = phase
    return combine_by_phase(sequences, phase_map).with_jobs(jobs)


###################################################################################################
# State transition
###################################################################################################


def test_same_phase_cluster_arriving_after_green():
    config = IntersectionConfig(min_switch=4.0, slt=2.0)
    prev = ScheduleState(s=0, pd=3.0, t=5.0, d=0.0)
    state, entry = advance_state(prev, 0, _cluster(1, 10.0, 13.0), config)
    assert (entry.pst, entry.ast) == (5.0, 10.0)
    assert state.t == 13.0
    assert state.d == 0.0
    assert not entry.new_run


def test_phase_switch_with_queue_adds_start_up_lost_time():
    config = IntersectionConfig(min_switch=4.0, slt=2.0)
    prev = ScheduleState(s=0, pd=10.0, t=5.0, d=0.0)
    state, entry = advance_state(prev, 1, _cluster(3, 2.0, 4.0), config)
    assert entry.pst == 9.0
    assert entry.ast == 11.0
    assert state.t == 13.0
    assert state.pd == 4.0
    assert state.d == 27.0
    assert entry.new_run


def test_phase_switch_without_queue_has_no_lost_time():
    config = IntersectionConfig(min_switch=4.0, slt=2.0)
    prev = ScheduleState(s=0, pd=10.0, t=5.0, d=0.0)
    state, entry = advance_state(prev, 1, _cluster(2, 20.0, 24.0), config)
    assert entry.pst == 9.0
    assert entry.ast == 20.0
    assert state.d == 0.0
    assert state.pd == 24.0 - 9.0


def test_switch_waits_for_min_green():
    config = IntersectionConfig(min_switch=4.0, slt=2.0, min_green=5.0)
    prev = ScheduleState(s=0, pd=2.0, t=10.0, d=0.0)
    _, entry = advance_state(prev, 1, _cluster(1, 0.0, 2.0), config)
    assert entry.pst == 10.0 + 3.0 + 4.0


def test_extension_past_max_green_restarts_the_run():
    config = IntersectionConfig(min_switch=4.0, slt=2.0, max_green=20.0, min_green=5.0)
    prev = ScheduleState(s=0, pd=18.0, t=18.0, d=0.0)
    state, entry = advance_state(prev, 0, _cluster(2, 18.0, 22.0), config)
    assert entry.new_run
    assert entry.pst == 18.0 + config.restart_gap(0)
    assert config.restart_gap(0) == 4.0 + 5.0 + 4.0
    assert state.pd == state.t - entry.pst


def test_cumulative_delay_of_a_flow():
    config = IntersectionConfig(min_switch=4.0, slt=2.0)
    initial = ScheduleState(s=0, pd=10.0, t=5.0, d=0.0)
    state, entry = advance_state(initial, 1, _cluster(3, 2.0, 4.0), config)
    flow = ControlFlow(initial, (entry,), state)
    assert cumulative_delay(flow) == 27.0

    on_time = ControlFlow(initial, (), initial)
    assert cumulative_delay(on_time) == 0.0


def test_single_cluster_delay_is_count_times_wait():
    config = IntersectionConfig()
    initial = ScheduleState(s=0, pd=10.0, t=5.0, d=0.0)
    state, entry = advance_state(initial, 0, _cluster(4, 0.0, 8.0), config)
    assert entry.ast == 5.0
    assert cumulative_delay(ControlFlow(initial, (entry,), state)) == 20.0


def test_config_validation():
    with pytest.raises(ConfigurationError):
        IntersectionConfig(phase_count=0)
    with pytest.raises(ConfigurationError):
        IntersectionConfig(min_switch=[[0.0, 4.0], [0.0, 0.0]])
    with pytest.raises(ConfigurationError):
        IntersectionConfig(max_green=5.0, min_green=5.0)
    with pytest.raises(ConfigurationError):
        IntersectionConfig(phase_count=3, slt=[2.0, 2.0])
    config = IntersectionConfig(phase_count=3, min_switch=3.0)
    assert config.min_switch[1] == (3.0, 0.0, 3.0)


###################################################################################################
# Forward dynamic program
###################################################################################################


def test_green_phase_serves_its_cluster_immediately():
    config = IntersectionConfig()
    initial = ScheduleState(s=0, pd=10.0, t=0.0, d=0.0)
    flow = forward_dp(_inputs({0: [_cluster(1, 5.0, 7.0)]}), initial, config)
    assert flow.phases == (0,)
    assert flow.delay == 0.0


def test_ties_prefer_the_lowest_phase_first():
    config = IntersectionConfig(min_switch=4.0, slt=2.0)
    initial = ScheduleState(s=0, pd=0.0, t=0.0, d=0.0)
    inputs = _inputs({0: [_cluster(1, 10.0, 12.0, first=0)], 1: [_cluster(1, 10.0, 12.0, first=1)]})
    flow = forward_dp(inputs, initial, config)
    assert flow.phases == (0, 1)
    assert flow.delay == pytest.approx(8.0)


def test_empty_input_keeps_the_initial_state():
    initial = ScheduleState(s=1, pd=3.0, t=7.0, d=0.0)
    flow = forward_dp(_inputs({}), initial, IntersectionConfig())
    assert flow.entries == ()
    assert flow.final == initial


def test_jobs_on_unknown_phase_are_rejected():
    with pytest.raises(ConfigurationError):
        forward_dp(_inputs({3: [_cluster(1, 1.0, 2.0)]}), ScheduleState(0, 1.0, 0.0, 0.0), IntersectionConfig())


def _interleavings(sizes):
    slots = [p for p, n in enumerate(sizes) for _ in range(n)]
    return set(itertools.permutations(slots))


def _brute_force(jobs, initial, config):
    best = None
    for order in _interleavings([len(j) for j in jobs]):
        state = initial
        taken = [0] * len(jobs)
        for phase in order:
            state, _ = advance_state(state, phase, jobs[phase][taken[phase]], config)
            taken[phase] += 1
        if best is None or state.d < best:
            best = state.d
    return best


def _random_jobs(rng, count, first):
    arr = 0.0
    clusters = []
    for k in range(count):
        arr += rng.uniform(0.0, 15.0)
        size = int(rng.integers(1, 5))
        dep = arr + size * rng.uniform(1.0, 3.0)
        clusters.append(_cluster(size, arr, dep, first=first + 10 * k))
        arr = dep
    return clusters


@pytest.mark.parametrize("binding", [False, True])
def test_forward_dp_matches_exhaustive_search(binding):
    rng = np.random.default_rng(7)
    restarts = 0
    for _ in range(300):
        min_green = float(rng.uniform(0.0, 8.0))
        config = IntersectionConfig(
            min_switch=float(rng.uniform(2.0, 6.0)),
            slt=float(rng.uniform(0.0, 3.0)),
            max_green=min_green + float(rng.uniform(3.0, 25.0)) if binding else 1000.0,
            min_green=min_green,
        )
        total = int(rng.integers(1, 9))
        n0 = int(rng.integers(0, total + 1))
        jobs = [_random_jobs(rng, n0, 0), _random_jobs(rng, total - n0, 1000)]
        pd = 0.0 if rng.random() < 0.3 else float(rng.uniform(0.5, 20.0))
        initial = ScheduleState(s=int(rng.integers(0, 2)), pd=pd, t=float(rng.uniform(0.0, 5.0)), d=0.0)
        flow = forward_dp(_inputs({0: jobs[0], 1: jobs[1]}), initial, config)
        assert flow.delay == pytest.approx(_brute_force(jobs, initial, config), abs=1e-7)
        # per-phase order is preserved
        for phase in (0, 1):
            assert [e.cluster for e in flow.entries if e.phase == phase] == jobs[phase]
        phases = (initial.s,) + flow.phases
        restarts += sum(1 for e, prev in zip(flow.entries, phases) if e.new_run and e.phase == prev)
    assert (restarts > 0) == binding


def test_forward_dp_handles_a_busy_intersection():
    config = IntersectionConfig(min_switch=4.0, slt=2.0, max_green=30.0, min_green=5.0)
    jobs = {
        0: [_cluster(1, 2.0 * k, 2.0 * k + 2.0, first=k) for k in range(20)],
        1: [_cluster(1, 2.0 * k + 1.0, 2.0 * k + 3.0, first=100 + k) for k in range(20)],
    }
    initial = ScheduleState(s=0, pd=3.0, t=0.0, d=0.0)
    flow = forward_dp(_inputs(jobs), initial, config)
    for phase in (0, 1):
        assert [e.cluster for e in flow.entries if e.phase == phase] == jobs[phase]
    for first, second in ((0, 1), (1, 0)):
        state = initial
        for cluster in jobs[first] + jobs[second]:
            state, _ = advance_state(state, first if cluster in jobs[first] else second, cluster, config)
        assert flow.delay <= state.d + 1e-9


def test_flow_annotations_are_consistent():
    config = IntersectionConfig()
    inputs = _inputs({0: [_platoon(0, 3.0, 4)], 1: [_platoon(100, 1.0, 2), _platoon(200, 20.0, 3)]})
    flow = forward_dp(inputs, ScheduleState(s=1, pd=4.0, t=0.0, d=0.0), config)
    for e in flow.entries:
        assert e.ast >= e.pst
        assert e.ast >= e.cluster.arr
    assert cumulative_delay(flow) == pytest.approx(flow.delay)
    assert recost(flow, flow.clusters, config).delay == pytest.approx(flow.delay)


###################################################################################################
# Post-processing
###################################################################################################


def test_enforce_max_green_without_violation_returns_the_flow():
    config = IntersectionConfig()
    inputs = _inputs({0: [_platoon(0, 0.0, 5)]})
    flow = forward_dp(inputs, ScheduleState(0, 10.0, 0.0, 0.0), config)
    assert enforce_max_green(flow, inputs, config) is flow


def test_enforce_max_green_splits_a_long_cluster():
    config = IntersectionConfig(min_switch=4.0, slt=2.0, max_green=40.0, min_green=5.0)
    inputs = _inputs({0: [_platoon(0, 0.0, 30)]})
    flow = forward_dp(inputs, ScheduleState(0, 0.0, 0.0, 0.0), config)
    assert flow.runs()[0].duration == 60.0

    repaired = enforce_max_green(flow, inputs, config)
    assert [c.count for c in repaired.clusters] == [20, 10]
    assert all(run.duration <= 40.0 for run in repaired.runs())
    members = [m for c in repaired.clusters for m in c.members]
    assert members == list(range(30))


def test_enforce_max_green_rejects_a_vehicle_longer_than_max_green():
    config = IntersectionConfig(max_green=40.0)
    inputs = _inputs({0: [_cluster(1, 0.0, 50.0)]})
    flow = forward_dp(inputs, ScheduleState(0, 0.0, 0.0, 0.0), config)
    with pytest.raises(ConfigurationError):
        enforce_max_green(flow, inputs, config)


def test_reschedule_leaves_singletons_alone():
    config = IntersectionConfig()
    inputs = _inputs({0: [_cluster(1, 0.0, 2.0, first=0)], 1: [_cluster(1, 0.0, 2.0, first=1)]})
    flow = forward_dp(inputs, ScheduleState(0, 10.0, 0.0, 0.0), config)
    assert flow.delay > 0
    assert reschedule_largest_delay_batch(flow, inputs, config) is flow


def test_reschedule_leaves_zero_delay_flow_alone():
    config = IntersectionConfig()
    inputs = _inputs({0: [_platoon(0, 5.0, 3)]})
    flow = forward_dp(inputs, ScheduleState(0, 10.0, 0.0, 0.0), config)
    assert flow.delay == 0.0
    assert reschedule_largest_delay_batch(flow, inputs, config) is flow


def test_reschedule_does_not_increase_delay():
    config = IntersectionConfig()
    inputs = _inputs({0: [_platoon(0, 0.0, 12)], 1: [_platoon(100, 4.0, 5)]})
    flow = forward_dp(inputs, ScheduleState(0, 10.0, 0.0, 0.0), config)
    result = reschedule_largest_delay_batch(flow, inputs, config)
    assert cumulative_delay(result) <= cumulative_delay(flow)
    assert sorted(m for c in result.clusters for m in c.members) == sorted(
        m for c in flow.clusters for m in c.members
    )
