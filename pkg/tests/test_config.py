import pytest
import yaml

from coopsched.config import ScenarioConfig, bundled_scenarios, load_scenario
from coopsched.exceptions import ConfigurationError


def test_bundled_scenarios_load():
    assert bundled_scenarios() == ["arterial", "single_intersection"]
    single = load_scenario("single_intersection")
    assert single.geometry.intersections == 1
    assert single.demand.main_rate == 1250.0
    assert single.window == (600.0, 3000.0)
    arterial = load_scenario("arterial")
    assert arterial.geometry.intersections == 3
    assert arterial.geometry.link_length == 300.0


def test_default_scenario_matches_the_dataclass_defaults():
    assert load_scenario().to_dict() == ScenarioConfig().to_dict()


def test_scenario_file(tmp_path):
    path = tmp_path / "scenario.yaml"
    path.write_text(yaml.safe_dump({"name": "mine", "controller": "cooperative", "demand": {"tier": "medium"}}))
    config = load_scenario(str(path))
    assert config.name == "mine"
    assert config.controller == "coop"
    assert config.demand.tier == "med"


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigurationError) as info:
        ScenarioConfig.from_dict({"signals": {"greeen": 3}})
    assert info.value.field == "signals.greeen"
    with pytest.raises(ConfigurationError):
        ScenarioConfig.from_dict({"colour": "red"})


def test_missing_scenario():
    with pytest.raises(ConfigurationError) as info:
        load_scenario("no_such_scenario")
    assert info.value.field == "scenario"


@pytest.mark.parametrize(
    "overrides, field",
    [
        ({"penetration": 1.5}, "penetration"),
        ({"controller": "adaptive"}, "controller"),
        ({"interval": -1.0}, "interval"),
        ({"window": [100.0, 5000.0]}, "window"),
        ({"seeds": []}, "seeds"),
        ({"dt": 0.3}, "control_interval"),
        ({"demand": "extreme"}, "demand.tier"),
    ],
)
def test_validation_names_the_field(overrides, field):
    with pytest.raises(ConfigurationError) as info:
        ScenarioConfig().with_overrides(**overrides)
    assert info.value.field == field


def test_overrides():
    config = ScenarioConfig().with_overrides(controller="coop", demand="low", interval=3.0, penetration=None)
    assert config.controller == "coop"
    assert config.demand.tier == "low"
    assert config.interval == 3.0
    assert config.penetration == 1.0


def test_duration_override_moves_the_window():
    config = ScenarioConfig().with_overrides(duration=1200.0)
    assert config.window == (200.0, 1000.0)
    explicit = ScenarioConfig().with_overrides(duration=1200.0, window=[300.0, 900.0])
    assert explicit.window == (300.0, 900.0)


def test_signal_timing_is_validated():
    with pytest.raises(ConfigurationError):
        ScenarioConfig.from_dict({"signals": {"yellow": 5.0, "changeover": 4.0}})
    with pytest.raises(ConfigurationError):
        ScenarioConfig.from_dict({"signals": {"max_green": 4.0}})


def test_advisories_may_not_exceed_the_speed_limit():
    with pytest.raises(ConfigurationError):
        ScenarioConfig.from_dict({"geometry": {"speed_limit": 15.0}})


def test_intersection_config_from_signals():
    config = ScenarioConfig().signals.intersection_config()
    assert config.min_switch == ((0.0, 4.0), (4.0, 0.0))
    assert config.slt == (2.0, 2.0)
