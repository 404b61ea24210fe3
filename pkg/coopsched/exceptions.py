"""
Exceptions raised by coopsched.
"""

from typing import Optional, Sequence


class CoopSchedError(Exception):
    """Base class for all errors raised by this package."""


class ConfigurationError(CoopSchedError, ValueError):
    """An invalid parameter, scenario file or network description.

    Args:
        message (str): What is wrong.
        field (str, optional): Dotted path of the offending configuration field.
    """

    def __init__(self, message: str, field: Optional[str] = None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class CollisionError(CoopSchedError, RuntimeError):
    """Two vehicles (or a vehicle and a stop line) ended up with a non-positive gap.

    This is a simulation bug and aborts the run.
    """

    def __init__(self, road: str, vehicles: Sequence[int], time: float, gap: float):
        self.road = road
        self.vehicles = tuple(vehicles)
        self.time = time
        self.gap = gap
        super().__init__(
            f"collision on road {road} at t={time:.2f}s between vehicles"
            f" {self.vehicles} (gap {gap:.3f} m)"
        )


class SchedulingError(CoopSchedError, RuntimeError):
    """The scheduler could not produce a schedule that satisfies its constraints."""
