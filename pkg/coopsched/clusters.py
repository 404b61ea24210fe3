"""
Aggregate cluster representation of sensed traffic.

Vehicles approaching an intersection are grouped into clusters ``(count, arr, dep)``
per entry road. The road cluster sequences of roads that may proceed concurrently
are then combined per phase into the jobs of the intersection's single machine
scheduling problem.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

from coopsched.exceptions import ConfigurationError

###################################################################################################
# Data types
###################################################################################################


class Observation(NamedTuple):
    """One sensed vehicle: predicted arrival at the stop line and predicted clearance time."""

    vehicle: int
    arr: float
    clearance: float


@dataclass(frozen=True)
class Cluster:
    """A non-divisible scheduling job made of spatially proximate vehicles.

    ``observations`` keeps the per-vehicle arrival and clearance predictions the
    cluster was built from. Clusters constructed by hand may leave it empty, in
    which case the members are assumed to be served uniformly over ``[arr, dep]``.
    """

    count: int
    arr: float
    dep: float
    members: Tuple[int, ...]
    observations: Tuple[Observation, ...] = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"A cluster needs at least one vehicle, got count={self.count}.")
        if len(self.members) != self.count:
            raise ValueError(
                f"Cluster count {self.count} does not match {len(self.members)} members."
            )
        if self.dep < self.arr:
            raise ValueError(f"Cluster departs ({self.dep}) before it arrives ({self.arr}).")
        if self.observations and len(self.observations) != self.count:
            raise ValueError("Cluster observations do not match its members.")

    @classmethod
    def from_observations(cls, observations: Iterable[Observation]) -> "Cluster":
        """Build a cluster from observations that are already ordered by arrival."""
        obs = tuple(observations)
        if not obs:
            raise ValueError("Cannot build a cluster without observations.")
        return cls(
            count=len(obs),
            arr=obs[0].arr,
            dep=max(o.clearance for o in obs),
            members=tuple(o.vehicle for o in obs),
            observations=obs,
        )

    @property
    def duration(self) -> float:
        return self.dep - self.arr

    def vehicle_observations(self) -> Tuple[Observation, ...]:
        """Per-vehicle arrival and clearance, falling back to uniform service."""
        if self.observations:
            return self.observations
        service = self.duration / self.count
        return tuple(
            Observation(vehicle, self.arr + j * service, self.arr + (j + 1) * service)
            for j, vehicle in enumerate(self.members)
        )

    def split(self, k: int) -> Tuple["Cluster", "Cluster"]:
        """Split into the first ``k`` vehicles and the rest."""
        if not 0 < k < self.count:
            raise ValueError(f"Cannot split a cluster of {self.count} vehicles at {k}.")
        obs = self.vehicle_observations()
        return Cluster.from_observations(obs[:k]), Cluster.from_observations(obs[k:])

    def shifted(self, offset: float) -> "Cluster":
        """The same cluster arriving ``offset`` seconds later (earlier if negative)."""
        obs = tuple(
            Observation(o.vehicle, o.arr + offset, o.clearance + offset)
            for o in self.observations
        )
        return replace(self, arr=self.arr + offset, dep=self.dep + offset, observations=obs)

    def explode(self, lo: float, hi: float) -> List["Cluster"]:
        """Re-express the vehicles arriving within ``[lo, hi]`` as singleton clusters.

        Vehicles before and after the interval stay grouped, so the order of the
        members is preserved.
        """
        obs = self.vehicle_observations()
        before = [o for o in obs if o.arr < lo]
        inside = [o for o in obs if lo <= o.arr <= hi]
        after = [o for o in obs if o.arr > hi]
        if not inside or (len(inside) == 1 and not before and not after):
            return [self]
        parts = []
        if before:
            parts.append(Cluster.from_observations(before))
        parts.extend(Cluster.from_observations([o]) for o in inside)
        if after:
            parts.append(Cluster.from_observations(after))
        return parts


@dataclass(frozen=True)
class RoadClusterSequence:
    """The cluster sequence of one entry road, ordered by arrival.

    ``horizon`` is the look-ahead bound of the road in seconds.
    """

    road: str
    clusters: Tuple[Cluster, ...]
    horizon: float

    def __post_init__(self):
        for prev, nxt in zip(self.clusters, self.clusters[1:]):
            if not nxt.arr > prev.arr:
                raise ValueError(f"Clusters on road {self.road} are not ordered by arrival.")
            if prev.dep > nxt.arr:
                raise ValueError(f"Consecutive clusters on road {self.road} overlap.")

    @property
    def vehicle_count(self) -> int:
        return sum(c.count for c in self.clusters)


@dataclass(frozen=True)
class InputClusterSequence:
    """Road cluster sequences grouped by phase, plus the phase job sequences.

    ``jobs[phase]`` is the ordered job list the scheduler sequences for that phase.
    It starts out as the merge of the phase's road sequences and is rewritten when
    clusters get split.
    """

    roads: Mapping[int, Tuple[RoadClusterSequence, ...]]
    horizon: float
    jobs: Mapping[int, Tuple[Cluster, ...]]

    def phases(self) -> List[int]:
        return sorted(set(self.roads) | set(self.jobs))

    def phase_jobs(self, phase: int) -> Tuple[Cluster, ...]:
        return tuple(self.jobs.get(phase, ()))

    def with_jobs(self, jobs: Mapping[int, Sequence[Cluster]]) -> "InputClusterSequence":
        """Copy with the job sequences of the given phases replaced."""
        merged: Dict[int, Tuple[Cluster, ...]] = dict(self.jobs)
        merged.update({phase: tuple(seq) for phase, seq in jobs.items()})
        return replace(self, jobs=merged)

    @property
    def vehicle_count(self) -> int:
        return sum(c.count for seq in self.jobs.values() for c in seq)


###################################################################################################
# Operations
###################################################################################################


def cluster_vehicles(
    observations: Sequence[Observation],
    interval: float,
    road: str = "",
    horizon: float = math.inf,
    horizon_end: Optional[float] = None,
) -> RoadClusterSequence:
    """Group the sensed vehicles of one road into clusters.

    Two consecutive vehicles share a cluster iff the later vehicle arrives no more than
    ``interval`` seconds after the clearance of the cluster so far. With ``interval=0``
    only contiguous vehicles are merged.

    Args:
        observations (Sequence[Observation]): Sensed vehicles of the road.
        interval (float): The clustering interval in seconds.
        road (str, optional): The entry road identifier.
        horizon (float, optional): Look-ahead bound of the road in seconds. Defaults to inf.
        horizon_end (float, optional): Absolute time after which arrivals are dropped.
            A cluster that straddles it keeps only the members arriving before it.

    Raises:
        ConfigurationError: If the interval is negative.

    Returns:
        RoadClusterSequence: The clusters of the road.
    """
    if interval < 0:
        raise ConfigurationError(f"must be >= 0, got {interval}", field="interval")
    groups: List[List[Observation]] = []
    dep = -math.inf
    for obs in sorted(observations, key=lambda o: o.arr):
        if horizon_end is not None and obs.arr > horizon_end:
            break
        if groups and obs.arr - dep <= interval:
            groups[-1].append(obs)
            dep = max(dep, obs.clearance)
        else:
            groups.append([obs])
            dep = obs.clearance
    clusters = tuple(Cluster.from_observations(group) for group in groups)
    return RoadClusterSequence(road=road, clusters=clusters, horizon=horizon)


def merge_concurrent(sequences: Sequence[RoadClusterSequence]) -> Tuple[Cluster, ...]:
    """Merge the road sequences of one phase into a single job sequence.

    Clusters of concurrent roads that overlap in time discharge in parallel and
    become one job. The order of clusters along each road is kept.
    """
    ordered = sorted(
        (c for seq in sequences for c in seq.clusters), key=lambda c: c.arr
    )
    jobs: List[Cluster] = []
    for cluster in ordered:
        if jobs and cluster.arr < jobs[-1].dep:
            obs = sorted(
                jobs[-1].vehicle_observations() + cluster.vehicle_observations(),
                key=lambda o: o.arr,
            )
            jobs[-1] = Cluster.from_observations(obs)
        else:
            jobs.append(cluster)
    return tuple(jobs)


def combine_by_phase(
    road_sequences: Sequence[RoadClusterSequence], phase_map: Mapping[str, int]
) -> InputClusterSequence:
    """Combine road cluster sequences that can proceed concurrently.

    Args:
        road_sequences (Sequence[RoadClusterSequence]): One sequence per entry road.
        phase_map (Mapping[str, int]): Phase of every entry road.

    Raises:
        ConfigurationError: If a road has no phase or appears twice.

    Returns:
        InputClusterSequence: Sequences grouped under their phase, H = max road horizon.
    """
    grouped: Dict[int, List[RoadClusterSequence]] = {phase: [] for phase in phase_map.values()}
    seen = set()
    for seq in road_sequences:
        if seq.road not in phase_map:
            raise ConfigurationError(f"road {seq.road!r} is not mapped to a phase", field="phase_map")
        if seq.road in seen:
            raise ConfigurationError(f"road {seq.road!r} appears twice", field="phase_map")
        seen.add(seq.road)
        grouped[phase_map[seq.road]].append(seq)
    horizon = max((seq.horizon for seq in road_sequences), default=0.0)
    roads = {phase: tuple(seqs) for phase, seqs in grouped.items()}
    jobs = {phase: merge_concurrent(seqs) for phase, seqs in roads.items()}
    return InputClusterSequence(roads=roads, horizon=horizon, jobs=jobs)
