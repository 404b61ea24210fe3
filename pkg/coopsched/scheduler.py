"""
Schedule-driven intersection control.

The scheduler sequences the phase jobs of an ``InputClusterSequence`` by a
forward-recursion dynamic program. Every partial schedule is summarised by a state
``(s, pd, t, d)``: current phase, duration of the current phase run, finish time of
the last scheduled cluster and cumulative delay. The DP layers are indexed by how
many jobs of each phase have been consumed and only non-dominated states survive.
"""

import bisect
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

from coopsched.clusters import Cluster, InputClusterSequence
from coopsched.exceptions import ConfigurationError, SchedulingError

LOG = logging.getLogger(__name__)

DEFAULT_CHANGEOVER = 4.0
DEFAULT_SLT = 2.0
DEFAULT_MAX_GREEN = 60.0
DEFAULT_MIN_GREEN = 5.0

# delays closer than this are treated as ties
DELAY_TOLERANCE = 1e-9

###################################################################################################
# Data types
###################################################################################################


def _per_phase(value, phase_count: int, name: str) -> Tuple[float, ...]:
    if isinstance(value, (int, float)):
        return tuple(float(value) for _ in range(phase_count))
    values = tuple(float(v) for v in value)
    if len(values) != phase_count:
        raise ConfigurationError(
            f"expected {phase_count} values, got {len(values)}", field=name
        )
    return values


@dataclass
class IntersectionConfig:
    """Timing parameters of one intersection.

    Scalars are broadcast to every phase. ``min_switch`` is either a full matrix or a
    scalar changeover used for every pair of distinct phases.
    """

    phase_count: int = 2
    min_switch: object = DEFAULT_CHANGEOVER
    slt: object = DEFAULT_SLT
    max_green: object = DEFAULT_MAX_GREEN
    min_green: object = DEFAULT_MIN_GREEN

    def __post_init__(self):
        if self.phase_count < 1:
            raise ConfigurationError(f"must be >= 1, got {self.phase_count}", field="phase_count")
        n = self.phase_count
        if isinstance(self.min_switch, (int, float)):
            self.min_switch = tuple(
                tuple(0.0 if s == i else float(self.min_switch) for i in range(n)) for s in range(n)
            )
        else:
            self.min_switch = tuple(tuple(float(x) for x in row) for row in self.min_switch)
        if len(self.min_switch) != n or any(len(row) != n for row in self.min_switch):
            raise ConfigurationError(f"must be a {n}x{n} matrix", field="min_switch")
        for s in range(n):
            for i in range(n):
                if s == i and self.min_switch[s][i] != 0:
                    raise ConfigurationError(f"diagonal entry ({s},{s}) must be 0", field="min_switch")
                if s != i and not self.min_switch[s][i] > 0:
                    raise ConfigurationError(f"entry ({s},{i}) must be > 0", field="min_switch")
        self.slt = _per_phase(self.slt, n, "slt")
        self.max_green = _per_phase(self.max_green, n, "max_green")
        self.min_green = _per_phase(self.min_green, n, "min_green")
        for p in range(n):
            if self.slt[p] < 0:
                raise ConfigurationError(f"phase {p} must be >= 0", field="slt")
            if self.min_green[p] < 0:
                raise ConfigurationError(f"phase {p} must be >= 0", field="min_green")
            if not self.max_green[p] > self.min_green[p]:
                raise ConfigurationError(
                    f"phase {p} must exceed min_green ({self.min_green[p]})", field="max_green"
                )

    def restart_gap(self, phase: int) -> float:
        """Shortest detour that ends the run of ``phase`` and gives it green again."""
        detours = [
            self.min_switch[phase][j] + self.min_green[j] + self.min_switch[j][phase]
            for j in range(self.phase_count)
            if j != phase
        ]
        return min(detours, default=0.0)


@dataclass(frozen=True)
class ScheduleState:
    """``(s, pd, t, d)``. ``pd == 0`` marks a phase that has not started its run yet."""

    s: int
    pd: float
    t: float
    d: float

    @property
    def run_start(self) -> float:
        return self.t - self.pd


@dataclass(frozen=True)
class ScheduledCluster:
    """A cluster placed in the schedule, annotated with its start times."""

    phase: int
    cluster: Cluster
    pst: float
    ast: float
    finish: float
    new_run: bool

    @property
    def delay(self) -> float:
        return self.cluster.count * (self.ast - self.cluster.arr)


@dataclass(frozen=True)
class PhaseRun:
    phase: int
    start: float
    finish: float
    entries: Tuple[ScheduledCluster, ...]

    @property
    def duration(self) -> float:
        return self.finish - self.start


@dataclass(frozen=True)
class ControlFlow:
    """A phase sequence with its scheduled clusters, ``(S, C_CF)``."""

    initial: ScheduleState
    entries: Tuple[ScheduledCluster, ...]
    final: ScheduleState

    @property
    def phases(self) -> Tuple[int, ...]:
        return tuple(e.phase for e in self.entries)

    @property
    def clusters(self) -> Tuple[Cluster, ...]:
        return tuple(e.cluster for e in self.entries)

    @property
    def delay(self) -> float:
        return self.final.d

    def phase_jobs(self) -> Dict[int, Tuple[Cluster, ...]]:
        jobs: Dict[int, List[Cluster]] = {}
        for e in self.entries:
            jobs.setdefault(e.phase, []).append(e.cluster)
        return {phase: tuple(seq) for phase, seq in jobs.items()}

    def runs(self) -> List[PhaseRun]:
        """Group the entries into maximal phase runs.

        A run that continues the live green starts when that green began; any other
        run starts once it both holds green and has traffic to serve.
        """
        groups: List[List[ScheduledCluster]] = []
        for e in self.entries:
            if not groups or e.new_run:
                groups.append([e])
            else:
                groups[-1].append(e)
        runs = []
        for group in groups:
            head = group[0]
            if not head.new_run and self.initial.pd > 0:
                start = self.initial.run_start
            else:
                start = max(head.pst, head.cluster.arr)
            runs.append(PhaseRun(head.phase, start, group[-1].finish, tuple(group)))
        return runs


###################################################################################################
# State transition
###################################################################################################


def advance_state(
    prev: ScheduleState,
    phase: int,
    cluster: Cluster,
    config: IntersectionConfig,
    new_run: Optional[bool] = None,
) -> Tuple[ScheduleState, ScheduledCluster]:
    """Append ``cluster`` on ``phase`` to a partial schedule.

    A phase switch starts a new run after the changeover ``MinSwitch(s, i)``. Staying
    on the same phase extends the run, unless that would push a run already holding
    green past ``max_green``; then the run is restarted after the shortest detour
    through another phase. Switching away from a run shorter than ``min_green``
    waits until it reaches ``min_green``.

    Args:
        prev (ScheduleState): State of the partial schedule.
        phase (int): Phase serving the cluster.
        cluster (Cluster): The next unscheduled job of that phase.
        config (IntersectionConfig): Timing parameters.
        new_run (bool, optional): Force (True) or forbid (False) a new run. By default
            a run starts on a phase switch or on a forced max-green restart.

    Returns:
        Tuple[ScheduleState, ScheduledCluster]: The new state and the annotated cluster.
    """
    switch = phase != prev.s
    if new_run is None:
        new_run = switch
        if not switch and prev.pd > 0:
            finish = max(cluster.arr, prev.t) + cluster.duration
            new_run = finish - prev.run_start > config.max_green[phase]
    if new_run:
        hold = max(0.0, config.min_green[prev.s] - prev.pd) if prev.pd > 0 else 0.0
        gap = config.min_switch[prev.s][phase] if switch else config.restart_gap(phase)
        pst = prev.t + hold + gap
    else:
        pst = prev.t
    ast = max(cluster.arr, pst)
    if (new_run or prev.pd == 0) and pst > cluster.arr:
        ast += config.slt[phase]
    t = ast + cluster.duration
    pd = t - pst if new_run else prev.pd + (t - pst)
    d = prev.d + cluster.count * (ast - cluster.arr)
    state = ScheduleState(s=phase, pd=pd, t=t, d=d)
    return state, ScheduledCluster(phase, cluster, pst, ast, t, new_run)


def cumulative_delay(flow: ControlFlow) -> float:
    """Total delay of a flow in vehicle-seconds."""
    return sum(e.delay for e in flow.entries)


def recost(
    flow: ControlFlow, clusters: Sequence[Cluster], config: IntersectionConfig
) -> ControlFlow:
    """Re-annotate ``flow`` with ``clusters`` in place of its own.

    The phase sequence and run structure of the flow are kept, so the result is
    directly comparable to the flow it came from.
    """
    if len(clusters) != len(flow.entries):
        raise ValueError(f"Expected {len(flow.entries)} clusters, got {len(clusters)}.")
    state = flow.initial
    entries = []
    for entry, cluster in zip(flow.entries, clusters):
        state, scheduled = advance_state(state, entry.phase, cluster, config, new_run=entry.new_run)
        entries.append(scheduled)
    return ControlFlow(initial=flow.initial, entries=tuple(entries), final=state)


###################################################################################################
# Forward dynamic program
###################################################################################################


@dataclass(frozen=True)
class _Label:
    state: ScheduleState
    seq: Tuple[int, ...]
    trail: Optional[tuple] = field(default=None, compare=False)
    # the current run cannot reach max green on the remaining jobs of its phase
    free: bool = field(default=False, compare=False)


def _dominates(a: _Label, b: _Label, config: IntersectionConfig) -> bool:
    """Whether every completion of ``b`` is matched or beaten by the same completion of ``a``.

    Both labels must be on the same phase with the same started flag. A later run start
    leaves more green before ``max_green`` and an earlier one ends ``min_green`` sooner,
    so run starts only have to be ordered when the run of ``a`` can still hit max green.
    """
    sa, sb = a.state, b.state
    if sa.s != sb.s or (sa.pd == 0) != (sb.pd == 0):
        return False
    if sa.t > sb.t or sa.d > sb.d + DELAY_TOLERANCE:
        return False
    if sa.run_start < sb.run_start and not a.free:
        return False
    if sa.pd > 0 and sa.run_start > sb.run_start and sa.pd < config.min_green[sa.s]:
        return False
    if sa.d < sb.d - DELAY_TOLERANCE:
        return True
    return a.seq <= b.seq


class _Front:
    """Non-dominated labels of one DP cell, sorted by finish time."""

    def __init__(self):
        self.labels: List[_Label] = []
        self.times: List[float] = []

    def insert(self, candidate: _Label, config: IntersectionConfig):
        t = candidate.state.t
        hi = bisect.bisect_right(self.times, t)
        for label in self.labels[:hi]:
            if _dominates(label, candidate, config):
                return
        lo = bisect.bisect_left(self.times, t)
        kept = [label for label in self.labels[lo:] if not _dominates(candidate, label, config)]
        self.labels[lo:] = kept
        self.times[lo:] = [label.state.t for label in kept]
        at = bisect.bisect_right(self.times, t)
        self.labels.insert(at, candidate)
        self.times.insert(at, t)


def _remaining(jobs: Sequence[Cluster]) -> Tuple[List[float], List[float]]:
    """Service time left and release-bound finish of every suffix of a job sequence.

    Serving jobs ``k..`` back to back from time ``t`` finishes at
    ``max(t + work[k], tail[k])``.
    """
    work, tail = [0.0] * (len(jobs) + 1), [-math.inf] * (len(jobs) + 1)
    for k in range(len(jobs) - 1, -1, -1):
        work[k] = work[k + 1] + jobs[k].duration
        tail[k] = max(tail[k + 1], jobs[k].arr + work[k])
    return work, tail


def forward_dp(
    input: InputClusterSequence, initial: ScheduleState, config: IntersectionConfig
) -> ControlFlow:
    """Find the interleaving of the phase job sequences with minimal cumulative delay.

    Ties are broken in favour of the lexicographically smallest phase sequence.

    Args:
        input (InputClusterSequence): Phase job sequences.
        initial (ScheduleState): State of the live signal at the planning instant.
        config (IntersectionConfig): Timing parameters.

    Raises:
        ConfigurationError: If the input has jobs for a phase the intersection does not have.

    Returns:
        ControlFlow: The optimal control flow.
    """
    for phase in input.phases():
        if not 0 <= phase < config.phase_count and input.phase_jobs(phase):
            raise ConfigurationError(
                f"phase {phase} outside 0..{config.phase_count - 1}", field="phase_map"
            )
    jobs = [input.phase_jobs(p) for p in range(config.phase_count)]
    sizes = tuple(len(j) for j in jobs)
    suffixes = [_remaining(j) for j in jobs]

    def make_label(state: ScheduleState, seq: Tuple[int, ...], trail, index: Tuple[int, ...]) -> _Label:
        s = state.s
        work, tail = suffixes[s]
        k = index[s]
        # finish if the run served every remaining job of its phase back to back
        bound = max(state.t + work[k], tail[k]) + config.slt[s]
        return _Label(state, seq, trail, bound - state.run_start <= config.max_green[s])

    start = tuple(0 for _ in sizes)
    layer: Dict[Tuple[int, ...], Dict[Tuple[int, bool], _Front]] = {start: {}}
    front = layer[start].setdefault((initial.s, initial.pd > 0), _Front())
    front.insert(make_label(initial, (), None, start), config)
    for _ in range(sum(sizes)):
        following: Dict[Tuple[int, ...], Dict[Tuple[int, bool], _Front]] = {}
        for index, fronts in layer.items():
            for front in fronts.values():
                for current in front.labels:
                    for phase, k in enumerate(index):
                        if k == sizes[phase]:
                            continue
                        state, entry = advance_state(current.state, phase, jobs[phase][k], config)
                        next_index = index[:phase] + (k + 1,) + index[phase + 1 :]
                        cell = following.setdefault(next_index, {})
                        target = cell.setdefault((state.s, state.pd > 0), _Front())
                        target.insert(
                            make_label(state, current.seq + (phase,), (entry, current.trail), next_index), config
                        )
        layer = following

    finals = [lb for front in layer[sizes].values() for lb in front.labels]
    best = min(finals, key=lambda lb: (round(lb.state.d, 9), lb.seq))
    entries = []
    trail = best.trail
    while trail is not None:
        entry, trail = trail
        entries.append(entry)
    entries.reverse()
    return ControlFlow(initial=initial, entries=tuple(entries), final=best.state)


###################################################################################################
# Post-processing of control flows
###################################################################################################


def _first_violation(
    flow: ControlFlow, config: IntersectionConfig
) -> Optional[Tuple[PhaseRun, ScheduledCluster]]:
    for run in flow.runs():
        limit = config.max_green[run.phase]
        if run.duration <= limit + DELAY_TOLERANCE:
            continue
        for entry in run.entries:
            if entry.finish - run.start > limit + DELAY_TOLERANCE:
                return run, entry
    return None


def enforce_max_green(
    flow: ControlFlow, input: InputClusterSequence, config: IntersectionConfig
) -> ControlFlow:
    """Split clusters until no phase run of the flow exceeds ``max_green``.

    The earliest offending cluster is split at the last vehicle that still clears
    within ``max_green`` and the problem is re-solved from the flow's initial state.

    Raises:
        ConfigurationError: If a single vehicle cannot be served within ``max_green``.
        SchedulingError: If splitting does not converge.

    Returns:
        ControlFlow: ``flow`` itself when it has no violation, otherwise the repaired flow.
    """
    current = flow
    for _ in range(input.vehicle_count + 1):
        violation = _first_violation(current, config)
        if violation is None:
            return current
        run, entry = violation
        cluster = entry.cluster
        limit = config.max_green[run.phase]
        deadline = run.start + limit
        obs = cluster.vehicle_observations()
        k = sum(1 for o in obs if entry.ast + (o.clearance - cluster.arr) <= deadline + DELAY_TOLERANCE)
        if k == 0:
            if entry is run.entries[0]:
                raise ConfigurationError(
                    f"phase {run.phase} cannot serve a single vehicle within {limit}s",
                    field="max_green",
                )
            raise SchedulingError(
                f"no vehicle of the cluster at arr={cluster.arr:.2f} fits the phase {run.phase} run"
            )
        if k >= cluster.count:
            raise SchedulingError(f"max-green violation on phase {run.phase} cannot be split")
        first, second = cluster.split(k)
        LOG.debug(
            f"max green: split cluster of {cluster.count} on phase {run.phase} into {k}+{cluster.count - k}"
        )
        jobs = list(current.phase_jobs().get(run.phase, ()))
        at = jobs.index(cluster)
        jobs[at : at + 1] = [first, second]
        input = input.with_jobs({**current.phase_jobs(), run.phase: jobs})
        current = forward_dp(input, flow.initial, config)
    raise SchedulingError("max-green enforcement did not converge")


def reschedule_largest_delay_batch(
    flow: ControlFlow, input: InputClusterSequence, config: IntersectionConfig
) -> ControlFlow:
    """Re-solve with the vehicles around the most delayed cluster as singletons.

    The cluster with the largest ``ast - arr`` is found and every vehicle arriving within
    ``[arr, ast]`` of it, on any phase, becomes a job of its own. The better of the old
    and the new flow is returned.
    """
    if not flow.entries:
        return flow
    worst = max(flow.entries, key=lambda e: e.ast - e.cluster.arr)
    lo, hi = worst.cluster.arr, worst.ast
    if hi <= lo:
        return flow
    jobs = {}
    changed = False
    for phase, seq in flow.phase_jobs().items():
        exploded = [part for job in seq for part in job.explode(lo, hi)]
        changed = changed or len(exploded) != len(seq)
        jobs[phase] = exploded
    if not changed:
        return flow
    candidate = forward_dp(input.with_jobs(jobs), flow.initial, config)
    if cumulative_delay(candidate) < cumulative_delay(flow):
        LOG.debug(
            f"batch reschedule: delay {cumulative_delay(flow):.1f} -> {cumulative_delay(candidate):.1f}"
        )
        return candidate
    return flow
