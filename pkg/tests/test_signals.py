import pytest

from coopsched.exceptions import ConfigurationError, CoopSchedError
from coopsched.scheduler import IntersectionConfig
from coopsched.signals import (
    FixedTimePlan,
    SignalController,
    SignalEvent,
    webster_cycle,
    webster_fixed_plan,
)


def test_webster_cycle():
    assert webster_cycle(8.0, 0.6) == pytest.approx(42.5)
    assert webster_cycle(8.0, 0.0) == 30.0
    assert webster_cycle(8.0, 0.95) == 120.0


def test_webster_rejects_oversaturation():
    with pytest.raises(ConfigurationError):
        webster_cycle(8.0, 1.0)
    with pytest.raises(ConfigurationError):
        webster_fixed_plan([0.6, 0.5], IntersectionConfig())


def test_webster_plan_lost_time_and_splits():
    config = IntersectionConfig(min_switch=2.0, slt=2.0, min_green=1.0)
    plan = webster_fixed_plan([0.3, 0.3], config)
    # lost time 2 + 2 changeover plus 2 + 2 start-up
    assert plan.cycle == pytest.approx(42.5)
    assert plan.greens[0] == pytest.approx(plan.greens[1])
    assert plan.changeovers == (2.0, 2.0)


def test_webster_plan_favours_the_busier_phase():
    plan = webster_fixed_plan([0.4, 0.1], IntersectionConfig())
    assert plan.greens[0] > plan.greens[1]
    assert plan.greens[1] >= 5.0


def test_plan_lookup():
    plan = FixedTimePlan(greens=(20.0, 10.0), changeovers=(4.0, 4.0))
    assert plan.cycle == 38.0
    assert plan.phase_at(0.0) == 0
    assert plan.phase_at(19.9) == 0
    assert plan.phase_at(21.0) == 1
    assert plan.phase_at(30.0) == 1
    assert plan.phase_at(35.0) == 0
    assert plan.phase_at(38.0 + 5.0) == 0


def _advance(controller, seconds, dt=0.5):
    for _ in range(int(round(seconds / dt))):
        controller.advance(dt)


def test_controller_holds_min_green():
    controller = SignalController("I0", IntersectionConfig(min_green=5.0), yellow=3.0)
    assert not controller.request(1, 0.0)
    _advance(controller, 5.0)
    assert controller.request(1, 5.0)
    assert controller.in_changeover
    assert controller.green_phase is None


def test_changeover_is_yellow_then_all_red():
    controller = SignalController("I0", IntersectionConfig(min_switch=4.0), yellow=3.0)
    _advance(controller, 10.0)
    controller.request(1, 10.0)
    assert controller.is_yellow(0)
    assert not controller.is_green(0) and not controller.is_green(1)
    assert not controller.request(0, 10.0)
    _advance(controller, 3.0)
    assert not controller.is_yellow(0)
    assert not controller.is_green(1)
    _advance(controller, 1.0)
    assert controller.is_green(1)
    assert controller.elapsed == 0.0
    controller.check_log()


def test_max_green_safety_net():
    controller = SignalController("I0", IntersectionConfig(max_green=20.0), yellow=3.0)
    _advance(controller, 20.0)
    assert controller.in_changeover
    assert controller.phase == 1

    fixed = SignalController("I0", IntersectionConfig(max_green=20.0), yellow=3.0, cap_green=False)
    _advance(fixed, 30.0)
    assert fixed.is_green(0)


def test_schedule_state_reflects_the_live_signal():
    controller = SignalController("I0", IntersectionConfig(min_switch=4.0), yellow=3.0)
    state = controller.schedule_state(0.0)
    assert (state.s, state.t) == (0, 0.0)
    assert state.pd > 0
    _advance(controller, 8.0)
    assert controller.schedule_state(8.0).pd == 8.0
    controller.request(1, 8.0)
    _advance(controller, 1.0)
    state = controller.schedule_state(9.0)
    assert (state.s, state.pd, state.t) == (1, 0.0, 12.0)


def test_unknown_phase_request():
    controller = SignalController("I0", IntersectionConfig(), yellow=3.0)
    with pytest.raises(ConfigurationError):
        controller.request(2, 0.0)


def test_check_log_detects_a_cut_short_changeover():
    controller = SignalController("I0", IntersectionConfig(min_switch=4.0), yellow=3.0)
    controller.log.append(SignalEvent(10.0, "changeover", 1, 0, 4.0))
    controller.log.append(SignalEvent(12.0, "green", 1))
    with pytest.raises(CoopSchedError):
        controller.check_log()


def test_max_green_waits_for_conflicting_demand():
    config = IntersectionConfig(max_green=20.0, min_green=5.0)
    controller = SignalController("I0", config, yellow=3.0)
    controller.conflicting_demand = False
    for _ in range(400):
        controller.advance(0.5)
        assert controller.elapsed <= config.max_green[0]
    assert controller.is_green(0)
    assert len(controller.log) == 1
    controller.conflicting_demand = True
    assert controller.request(1, controller.time)
    assert controller.in_changeover


def test_resting_green_reaches_the_safety_net_once_demand_appears():
    controller = SignalController("I0", IntersectionConfig(max_green=20.0, min_green=5.0), yellow=3.0)
    controller.conflicting_demand = False
    _advance(controller, 21.0)
    controller.conflicting_demand = True
    _advance(controller, 13.5)
    assert controller.is_green(0)
    _advance(controller, 0.5)
    assert controller.in_changeover
