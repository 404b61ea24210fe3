"""
Scenario configuration.

A scenario is a tree of dataclasses. It can be read from a YAML file, where every
key maps to a dataclass field, and overridden from the command line.
"""

import dataclasses
import os
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Tuple

import yaml

from coopsched.cooperative import CoopConfig
from coopsched.exceptions import ConfigurationError
from coopsched.idm import IdmParams
from coopsched.scheduler import IntersectionConfig

SCENARIO_DIR = os.path.join(os.path.dirname(__file__), "scenarios")

CONTROLLERS = ("fixed", "schedule", "coop")
CONTROLLER_ALIASES = {"cooperative": "coop"}
DEMAND_ALIASES = {"medium": "med"}

###################################################################################################
# Parts
###################################################################################################


@dataclass
class GeometryConfig:
    """Road layout: a corridor of ``intersections`` signals along a two-way main road.

    Every intersection has a north and a south side street. One intersection is the
    single intersection scenario, three make the arterial.
    """

    intersections: int = 1
    approach_length: float = 400.0
    side_length: float = 400.0
    link_length: float = 300.0
    exit_length: float = 200.0
    main_lanes: int = 2
    side_lanes: int = 1
    speed_limit: float = 18.06
    vehicle_length: float = 5.0

    def __post_init__(self):
        if self.intersections < 1:
            raise ConfigurationError(f"must be >= 1, got {self.intersections}", field="geometry.intersections")
        for name in ("approach_length", "side_length", "link_length", "exit_length", "speed_limit", "vehicle_length"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigurationError(f"must be > 0, got {value}", field=f"geometry.{name}")
        for name in ("main_lanes", "side_lanes"):
            value = getattr(self, name)
            if value < 1:
                raise ConfigurationError(f"must be >= 1, got {value}", field=f"geometry.{name}")


@dataclass
class TurningConfig:
    straight: float = 0.8
    left: float = 0.1
    right: float = 0.1

    def __post_init__(self):
        values = (self.straight, self.left, self.right)
        if any(p < 0 for p in values) or abs(sum(values) - 1.0) > 1e-9:
            raise ConfigurationError(f"proportions must be >= 0 and sum to 1, got {values}", field="demand.turning")

    def as_dict(self) -> Dict[str, float]:
        return {"straight": self.straight, "left": self.left, "right": self.right}


@dataclass
class DemandConfig:
    """Arrival rates.

    ``tier`` selects the rate (veh/h) of every main road source. Side street sources
    get ``side_ratio`` times that rate.
    """

    tier: str = "high"
    tiers: Dict[str, float] = field(default_factory=lambda: {"low": 363.0, "med": 750.0, "high": 1250.0})
    side_ratio: float = 0.4
    turning: TurningConfig = field(default_factory=TurningConfig)

    def __post_init__(self):
        self.tier = DEMAND_ALIASES.get(self.tier, self.tier)
        if self.tier not in self.tiers:
            raise ConfigurationError(f"unknown tier {self.tier!r}, expected one of {sorted(self.tiers)}", field="demand.tier")
        if any(rate < 0 for rate in self.tiers.values()):
            raise ConfigurationError("rates must be >= 0", field="demand.tiers")
        if self.side_ratio < 0:
            raise ConfigurationError(f"must be >= 0, got {self.side_ratio}", field="demand.side_ratio")

    @property
    def main_rate(self) -> float:
        return float(self.tiers[self.tier])

    @property
    def side_rate(self) -> float:
        return self.side_ratio * self.main_rate


@dataclass
class SignalConfig:
    """Signal timing shared by every intersection of the scenario.

    ``changeover`` is the full yellow plus all-red interval, of which the first
    ``yellow`` seconds are yellow. ``service_time`` is the per-lane discharge headway
    used when predicting clearance times.
    """

    changeover: float = 4.0
    yellow: float = 3.0
    slt: float = 2.0
    max_green: float = 60.0
    min_green: float = 5.0
    service_time: float = 2.0
    min_cycle: float = 30.0
    max_cycle: float = 120.0

    def __post_init__(self):
        if not 0 <= self.yellow <= self.changeover:
            raise ConfigurationError(
                f"must be within [0, changeover={self.changeover}], got {self.yellow}", field="signals.yellow"
            )
        if not self.service_time > 0:
            raise ConfigurationError(f"must be > 0, got {self.service_time}", field="signals.service_time")
        if not 0 < self.min_cycle <= self.max_cycle:
            raise ConfigurationError("need 0 < min_cycle <= max_cycle", field="signals.min_cycle")
        # validates the remaining fields
        self.intersection_config()

    def intersection_config(self, phase_count: int = 2) -> IntersectionConfig:
        try:
            return IntersectionConfig(
                phase_count=phase_count,
                min_switch=self.changeover,
                slt=self.slt,
                max_green=self.max_green,
                min_green=self.min_green,
            )
        except ConfigurationError as e:
            raise ConfigurationError(str(e), field="signals") from e


###################################################################################################
# Scenario
###################################################################################################


@dataclass
class ScenarioConfig:
    """A complete experiment description.

    Args:
        name (str): Scenario identifier written to the results.
        controller (str): ``fixed``, ``schedule`` or ``coop``.
        interval (float): Clustering interval in seconds.
        penetration (float): Fraction of vehicles that follow speed advisories.
        duration (float): Simulated seconds.
        window (Tuple[float, float]): Vehicles generated within ``[start, end)`` are measured.
        seeds (Tuple[int, ...]): Seeds of a sweep cell.
        dt (float): Integration step in seconds.
        control_interval (float): Seconds between two replanning instants.
        batch_reschedule (bool): Reschedule the most delayed batch vehicle by vehicle.
        check_invariants (bool): Check conservation, gaps and signal safety every step.
    """

    name: str = "single_intersection"
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    demand: DemandConfig = field(default_factory=DemandConfig)
    signals: SignalConfig = field(default_factory=SignalConfig)
    idm: IdmParams = field(default_factory=IdmParams)
    cooperative: CoopConfig = field(default_factory=CoopConfig)
    controller: str = "schedule"
    interval: float = 0.0
    penetration: float = 1.0
    duration: float = 3600.0
    window: Tuple[float, float] = (600.0, 3000.0)
    seeds: Tuple[int, ...] = (0, 1, 2, 3, 4)
    dt: float = 0.5
    control_interval: float = 1.0
    batch_reschedule: bool = False
    check_invariants: bool = False

    def __post_init__(self):
        self.controller = CONTROLLER_ALIASES.get(self.controller, self.controller)
        if self.controller not in CONTROLLERS:
            raise ConfigurationError(f"expected one of {CONTROLLERS}, got {self.controller!r}", field="controller")
        if self.interval < 0:
            raise ConfigurationError(f"must be >= 0, got {self.interval}", field="interval")
        if not 0 <= self.penetration <= 1:
            raise ConfigurationError(f"must be within [0, 1], got {self.penetration}", field="penetration")
        if not self.duration > 0:
            raise ConfigurationError(f"must be > 0, got {self.duration}", field="duration")
        self.window = tuple(float(w) for w in self.window)
        if len(self.window) != 2 or not 0 <= self.window[0] < self.window[1] <= self.duration:
            raise ConfigurationError(f"must satisfy 0 <= start < end <= duration, got {self.window}", field="window")
        self.seeds = tuple(int(s) for s in self.seeds)
        if not self.seeds:
            raise ConfigurationError("need at least one seed", field="seeds")
        if not self.dt > 0:
            raise ConfigurationError(f"must be > 0, got {self.dt}", field="dt")
        steps = self.control_interval / self.dt
        if not self.control_interval > 0 or abs(steps - round(steps)) > 1e-9:
            raise ConfigurationError(
                f"must be a positive multiple of dt={self.dt}, got {self.control_interval}", field="control_interval"
            )
        if self.cooperative.v_limit > self.geometry.speed_limit + 1e-9:
            raise ConfigurationError("advisories may not exceed the road speed limit", field="cooperative.v_limit")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "ScenarioConfig":
        """Build a scenario from nested dicts. Unknown keys are an error."""
        return _from_dict(cls, data, "")

    def to_dict(self) -> Dict[str, Any]:
        """The canonical JSON-serialisable form of the scenario."""
        data = dataclasses.asdict(self)
        data["window"] = list(self.window)
        data["seeds"] = list(self.seeds)
        return data

    def with_overrides(self, **overrides) -> "ScenarioConfig":
        """Copy with top-level fields or the demand tier replaced.

        ``demand`` sets the demand tier. A new ``duration`` without a ``window`` moves the
        measurement window to the middle two thirds of the run. ``None`` values are ignored.
        """
        overrides = {k: v for k, v in overrides.items() if v is not None}
        data = self.to_dict()
        if "demand" in overrides:
            data["demand"]["tier"] = overrides.pop("demand")
        if "duration" in overrides and "window" not in overrides:
            duration = float(overrides["duration"])
            overrides["window"] = [duration / 6.0, duration * 5.0 / 6.0]
        for key, value in overrides.items():
            if key not in data:
                raise ConfigurationError(f"unknown override {key!r}", field=key)
            data[key] = value
        return ScenarioConfig.from_dict(data)


def _from_dict(cls, data: Mapping[str, Any], prefix: str):
    if not isinstance(data, Mapping):
        raise ConfigurationError(f"expected a mapping, got {type(data).__name__}", field=prefix.rstrip(".") or None)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigurationError(f"unknown key {unknown[0]!r}", field=f"{prefix}{unknown[0]}")
    kwargs = {}
    for name, value in data.items():
        annotation = fields[name].type
        nested = _NESTED.get(annotation if isinstance(annotation, str) else getattr(annotation, "__name__", None))
        if nested is not None and value is not None:
            value = _from_dict(nested, value, f"{prefix}{name}.")
        kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigurationError(str(e), field=prefix.rstrip(".") or None) from e


_NESTED = {
    "GeometryConfig": GeometryConfig,
    "TurningConfig": TurningConfig,
    "DemandConfig": DemandConfig,
    "SignalConfig": SignalConfig,
    "IdmParams": IdmParams,
    "CoopConfig": CoopConfig,
}


def bundled_scenarios():
    """Names of the scenarios shipped with the package."""
    return sorted(f[: -len(".yaml")] for f in os.listdir(SCENARIO_DIR) if f.endswith(".yaml"))


def load_scenario(name_or_path: Optional[str] = None) -> ScenarioConfig:
    """Load a scenario from a YAML file or by bundled scenario name.

    Args:
        name_or_path (str, optional): A file path or the name of a bundled scenario.
            Defaults to the single intersection scenario.

    Raises:
        ConfigurationError: If the scenario does not exist or is invalid.

    Returns:
        ScenarioConfig: The scenario.
    """
    if name_or_path is None:
        name_or_path = "single_intersection"
    path = name_or_path
    if not os.path.exists(path):
        path = os.path.join(SCENARIO_DIR, f"{name_or_path}.yaml")
    if not os.path.exists(path):
        raise ConfigurationError(
            f"no such file or bundled scenario {name_or_path!r} (bundled: {', '.join(bundled_scenarios())})",
            field="scenario",
        )
    with open(path, "r") as f:
        try:
            data = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigurationError(f"cannot parse {path}: {e}", field="scenario") from e
    return ScenarioConfig.from_dict(data)
