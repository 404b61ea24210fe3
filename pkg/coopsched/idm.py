"""
Intelligent Driver Model car-following law.
"""

import math
from dataclasses import dataclass
from typing import Optional

from coopsched.exceptions import CollisionError, ConfigurationError


@dataclass
class IdmParams:
    """IDM parameters.

    Args:
        v0 (float): Desired speed in m/s (65 km/h).
        T (float): Desired time headway in seconds.
        s0 (float): Minimum gap in meters.
        a_max (float): Maximum acceleration in m/s^2.
        b (float): Comfortable deceleration in m/s^2.
        omega (float): Acceleration exponent.
        max_decel (float): Physical braking limit the integrator clamps to, in m/s^2.
    """

    v0: float = 18.06
    T: float = 1.5
    s0: float = 2.0
    a_max: float = 5.0
    b: float = 3.0
    omega: float = 4.0
    max_decel: float = 9.0

    def __post_init__(self):
        for name in ("v0", "T", "s0", "a_max", "b", "omega", "max_decel"):
            value = getattr(self, name)
            if not value > 0:
                raise ConfigurationError(f"must be > 0, got {value}", field=f"idm.{name}")


def desired_gap(v: float, dv: float, params: IdmParams) -> float:
    """s* = s0 + vT + v dv / (2 sqrt(a b))"""
    return params.s0 + v * params.T + v * dv / (2.0 * math.sqrt(params.a_max * params.b))


def idm_acceleration(
    v: float, gap: float, dv: float, params: IdmParams, v0: Optional[float] = None
) -> float:
    """IDM acceleration of a follower.

    Args:
        v (float): Follower speed.
        gap (float): Bumper-to-bumper distance to the leader, ``math.inf`` on a free road.
        dv (float): Approach rate, follower speed minus leader speed.
        params (IdmParams): Model parameters.
        v0 (float, optional): Desired speed overriding ``params.v0``, e.g. an advised speed.

    Raises:
        CollisionError: If the gap is not positive.

    Returns:
        float: The acceleration in m/s^2.
    """
    if gap <= 0:
        raise CollisionError(road="", vehicles=(), time=math.nan, gap=gap)
    desired = params.v0 if v0 is None else v0
    free = 1.0 - (v / desired) ** params.omega
    if math.isinf(gap):
        return params.a_max * free
    interaction = (max(0.0, desired_gap(v, dv, params)) / gap) ** 2
    return params.a_max * (free - interaction)
