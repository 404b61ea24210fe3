"""
Signal timing: Webster fixed-time plans and the signal controller that executes
phase commands with minimum green, maximum green and yellow plus all-red changeover.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

from coopsched.exceptions import ConfigurationError, CoopSchedError
from coopsched.scheduler import IntersectionConfig, ScheduleState

LOG = logging.getLogger(__name__)

# a green that has just begun still counts as a started run for the scheduler
GREEN_STARTED = 1e-6

###################################################################################################
# Fixed-time plans
###################################################################################################


@dataclass(frozen=True)
class FixedTimePlan:
    """A cyclic plan. Green ``i`` is followed by ``changeovers[i]`` seconds of changeover to phase ``i + 1``."""

    greens: Tuple[float, ...]
    changeovers: Tuple[float, ...]
    offset: float = 0.0

    @property
    def cycle(self) -> float:
        return sum(self.greens) + sum(self.changeovers)

    def phase_at(self, time: float) -> int:
        """The phase that shows green at ``time``, or the one being changed over to."""
        tau = (time - self.offset) % self.cycle
        n = len(self.greens)
        position = 0.0
        for phase in range(n):
            position += self.greens[phase]
            if tau < position:
                return phase
            position += self.changeovers[phase]
            if tau < position:
                return (phase + 1) % n
        return 0


def webster_cycle(lost_time: float, flow_ratio_sum: float, min_cycle: float = 30.0, max_cycle: float = 120.0) -> float:
    """Webster's optimal cycle ``(1.5 L + 5) / (1 - Y)`` clamped to ``[min_cycle, max_cycle]``."""
    if flow_ratio_sum >= 1:
        raise ConfigurationError(f"oversaturated, Y={flow_ratio_sum:.3f} >= 1", field="demand")
    cycle = (1.5 * lost_time + 5.0) / (1.0 - flow_ratio_sum)
    return min(max(cycle, min_cycle), max_cycle)


def webster_fixed_plan(
    flow_ratios: Sequence[float],
    config: IntersectionConfig,
    min_cycle: float = 30.0,
    max_cycle: float = 120.0,
) -> FixedTimePlan:
    """Fixed-time plan matching the demand by Webster's method.

    The lost time per cycle is the sum of the changeovers and the start-up lost times.
    Effective green is split in proportion to the critical flow ratios, and every phase
    gets at least its minimum green.

    Args:
        flow_ratios (Sequence[float]): Critical flow ratio ``y_i`` of every phase.
        config (IntersectionConfig): Timing parameters of the intersection.
        min_cycle (float, optional): Shortest cycle. Defaults to 30.
        max_cycle (float, optional): Longest cycle. Defaults to 120.

    Raises:
        ConfigurationError: If the flow ratios sum to 1 or more.

    Returns:
        FixedTimePlan: The plan.
    """
    n = config.phase_count
    if len(flow_ratios) != n:
        raise ConfigurationError(f"expected {n} flow ratios, got {len(flow_ratios)}", field="demand")
    changeovers = tuple(config.min_switch[i][(i + 1) % n] for i in range(n))
    lost_time = sum(changeovers) + sum(config.slt)
    total = sum(flow_ratios)
    cycle = webster_cycle(lost_time, total, min_cycle, max_cycle)
    if total > 0.9:
        LOG.warning(f"Webster plan close to saturation (Y={total:.3f}), cycle {cycle:.1f}s")
    effective = cycle - lost_time
    shares = [y / total for y in flow_ratios] if total > 0 else [1.0 / n] * n
    greens = tuple(
        max(config.min_green[i], shares[i] * effective + config.slt[i]) for i in range(n)
    )
    return FixedTimePlan(greens=greens, changeovers=changeovers)


###################################################################################################
# Signal controller
###################################################################################################


@dataclass(frozen=True)
class SignalEvent:
    """A green onset or the start of a changeover."""

    time: float
    kind: str
    phase: int
    from_phase: Optional[int] = None
    duration: float = 0.0


class SignalController:
    """Executes phase commands at one intersection.

    A switch always goes through the changeover ``MinSwitch(from, to)``: ``yellow`` seconds
    of yellow for the old phase, then all-red. Requests to leave a phase before it has
    shown ``min_green`` are ignored. With ``cap_green`` the controller switches to the
    next phase on its own once ``max_green`` is reached, as long as ``conflicting_demand``
    says some other movement is waiting. Otherwise the green rests: its run clock goes
    back to ``min_green``, so ``elapsed`` never exceeds ``max_green`` and a later request
    is served at once.
    """

    def __init__(
        self,
        intersection: str,
        config: IntersectionConfig,
        yellow: float = 3.0,
        phase: int = 0,
        cap_green: bool = True,
    ):
        self.intersection = intersection
        self.config = config
        self.yellow = yellow
        self.cap_green = cap_green
        self.conflicting_demand = True
        self.phase = phase
        self.elapsed = 0.0
        self.time = 0.0
        self.from_phase: Optional[int] = None
        self.changeover_remaining = 0.0
        self.yellow_remaining = 0.0
        self.log: List[SignalEvent] = [SignalEvent(0.0, "green", phase)]

    @property
    def in_changeover(self) -> bool:
        return self.from_phase is not None

    @property
    def green_phase(self) -> Optional[int]:
        return None if self.in_changeover else self.phase

    def is_green(self, phase: int) -> bool:
        return not self.in_changeover and self.phase == phase

    def is_yellow(self, phase: int) -> bool:
        return self.in_changeover and self.from_phase == phase and self.yellow_remaining > 1e-9

    def request(self, phase: int, now: float) -> bool:
        """Ask for ``phase`` to show green. Returns whether a changeover was started."""
        if not 0 <= phase < self.config.phase_count:
            raise ConfigurationError(f"phase {phase} does not exist at {self.intersection}", field="phase_map")
        if self.in_changeover or phase == self.phase:
            return False
        if self.elapsed < self.config.min_green[self.phase] - 1e-9:
            return False
        self._start_changeover(phase, now)
        return True

    def _start_changeover(self, phase: int, now: float):
        duration = self.config.min_switch[self.phase][phase]
        self.from_phase = self.phase
        self.phase = phase
        self.changeover_remaining = duration
        self.yellow_remaining = min(self.yellow, duration)
        self.log.append(SignalEvent(now, "changeover", phase, self.from_phase, duration))

    def advance(self, dt: float):
        self.time += dt
        if self.in_changeover:
            self.changeover_remaining -= dt
            self.yellow_remaining -= dt
            if self.changeover_remaining <= 1e-9:
                self.from_phase = None
                self.changeover_remaining = 0.0
                self.yellow_remaining = 0.0
                self.elapsed = 0.0
                self.log.append(SignalEvent(self.time, "green", self.phase))
            return
        self.elapsed += dt
        if not self.cap_green or self.elapsed < self.config.max_green[self.phase] - 1e-9:
            return
        if self.conflicting_demand and self.config.phase_count > 1:
            LOG.debug(f"{self.intersection}: max green reached on phase {self.phase}")
            self._start_changeover((self.phase + 1) % self.config.phase_count, self.time)
        else:
            # rest in green, min green counts as served
            self.elapsed = self.config.min_green[self.phase]

    def schedule_state(self, now: float) -> ScheduleState:
        """Initial scheduler state reflecting the live signal."""
        if self.in_changeover:
            return ScheduleState(s=self.phase, pd=0.0, t=now + self.changeover_remaining, d=0.0)
        return ScheduleState(s=self.phase, pd=max(self.elapsed, GREEN_STARTED), t=now, d=0.0)

    def check_log(self):
        """Raise if a green began without a full changeover from another phase."""
        previous = None
        for event in self.log:
            if event.kind == "green" and previous is not None:
                if previous.kind != "changeover" or previous.phase != event.phase:
                    raise CoopSchedError(f"{self.intersection}: green for phase {event.phase} without changeover")
                if event.time - previous.time < previous.duration - 1e-6:
                    raise CoopSchedError(
                        f"{self.intersection}: changeover to phase {event.phase} cut short at t={event.time:.2f}"
                    )
            previous = event
