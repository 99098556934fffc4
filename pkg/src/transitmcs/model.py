"""Transit topology, sensor trajectories, clustering results, and windowing."""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import MalformedTrajectoryError, ScheduleError
from .geometry import GeoPoint, TimestampedPoint, TrajectorySegment


@dataclass(frozen=True)
class RouteSegment:
    """Stop-to-stop link: departure node, arrival node, meters, m/s, seconds."""

    n_d: GeoPoint
    n_a: GeoPoint
    dist: float
    speed: float
    att: float

    def __post_init__(self):
        for name in ("dist", "speed", "att"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0):
                raise ScheduleError(f"route segment {name} must be finite and >= 0, got {v}")
        if self.speed > 0 and abs(self.dist / self.speed - self.att) / max(self.att, 1.0) > 0.5:
            raise ScheduleError(
                f"inconsistent route segment: dist/speed={self.dist / self.speed:.3f}s vs att={self.att:.3f}s"
            )


@dataclass(frozen=True)
class JourneyService:
    """One direction of a transit line as a chain of route segments.

    ``schedule`` is a tuple of trip departure times (seconds) or a single
    average headway in seconds.
    """

    js_id: str
    rs: tuple[RouteSegment, ...]
    schedule: tuple[float, ...] | float = ()
    stop_ids: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "rs", tuple(self.rs))
        if isinstance(self.schedule, list):
            object.__setattr__(self, "schedule", tuple(self.schedule))
        for i in range(len(self.rs) - 1):
            if self.rs[i].n_a != self.rs[i + 1].n_d:
                raise ScheduleError(
                    f"service {self.js_id!r}: route segment {i} arrival node does not match "
                    f"segment {i + 1} departure node"
                )

    @property
    def polyline(self) -> list[GeoPoint]:
        if not self.rs:
            return []
        return [self.rs[0].n_d] + [r.n_a for r in self.rs]


@dataclass(frozen=True)
class JourneyVehicle:
    v_s: str  # journey service id
    dt: float  # trip departure time
    rs: int  # index of the current route segment
    loc: GeoPoint
    t_d: float  # departure time for the current segment
    t_a: float  # estimated arrival at the segment's arrival node

    def __post_init__(self):
        if self.t_d > self.t_a:
            raise ValueError(f"vehicle departure {self.t_d} after arrival estimate {self.t_a}")
        if self.rs < 0:
            raise ValueError(f"negative route segment index {self.rs}")


@dataclass(frozen=True)
class ScheduledTrip:
    """One timetabled run of a service; ``stop_times[k]`` is the time at stop k."""

    trip_id: str
    service_id: str
    stop_times: tuple[float, ...]

    @property
    def departure(self) -> float:
        return self.stop_times[0]

    @property
    def arrival(self) -> float:
        return self.stop_times[-1]

    def vehicle_at_start(self, service: JourneyService) -> JourneyVehicle:
        return JourneyVehicle(
            v_s=self.service_id, dt=self.departure, rs=0, loc=service.rs[0].n_d,
            t_d=self.stop_times[0], t_a=self.stop_times[1],
        )


@dataclass(frozen=True)
class SensorTrajectory:
    sensor_id: str
    points: tuple[TimestampedPoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    def __len__(self):
        return len(self.points)

    def validate(self):
        for i in range(1, len(self.points)):
            if not self.points[i - 1].t < self.points[i].t:
                raise MalformedTrajectoryError(self.sensor_id, i)


@dataclass(frozen=True)
class ClusterCenter:
    """Mean member displacement ``(dx, dy, dt)`` placed at ``anchor``."""

    vector: tuple[float, float, float]
    anchor: TimestampedPoint

    def __post_init__(self):
        if not self.vector[2] > 0:
            raise ValueError(f"cluster center time delta must be positive, got {self.vector[2]}")

    @property
    def end(self) -> TimestampedPoint:
        dx, dy, dt = self.vector
        return TimestampedPoint.of(self.anchor.x + dx, self.anchor.y + dy, self.anchor.t + dt)

    @property
    def midpoint(self) -> GeoPoint:
        dx, dy, _ = self.vector
        return GeoPoint(self.anchor.x + dx / 2, self.anchor.y + dy / 2)

    @property
    def speed(self) -> float:
        dx, dy, dt = self.vector
        return math.hypot(dx, dy) / dt

    def as_segment(self, sensor_id: str = "center") -> TrajectorySegment:
        return TrajectorySegment(sensor_id, self.anchor, self.end)


@dataclass(frozen=True)
class Cluster:
    members: tuple[TrajectorySegment, ...]
    center: ClusterCenter
    core: TrajectorySegment
    hs: float = field(default=math.nan, compare=False)

    def __len__(self):
        return len(self.members)


def segmentize(tr: SensorTrajectory) -> list[TrajectorySegment]:
    """Split a trajectory of L points into its L-1 consecutive segments."""
    tr.validate()
    pts = tr.points
    return [TrajectorySegment(tr.sensor_id, pts[i], pts[i + 1]) for i in range(len(pts) - 1)]


def slot_index(t: float, delta_t: float, t0: float = 0.0) -> int:
    return math.floor((t - t0) / delta_t)


def slot_partition(
    segments: Iterable[TrajectorySegment], delta_t: float, t0: float = 0.0
) -> dict[int, list[TrajectorySegment]]:
    """Group segments by the time slot containing their start time."""
    if not delta_t > 0:
        raise ValueError(f"slot width must be positive, got {delta_t}")
    slots: dict[int, list[TrajectorySegment]] = defaultdict(list)
    for seg in segments:
        slots[slot_index(seg.start.t, delta_t, t0)].append(seg)
    return dict(sorted(slots.items()))


def all_segments(dataset: Sequence[SensorTrajectory]) -> list[TrajectorySegment]:
    out = []
    for tr in dataset:
        out.extend(segmentize(tr))
    return out


@dataclass(frozen=True)
class VehicleTruth:
    """Ground-truth record of one simulated vehicle run.

    ``stops`` holds ``(stop_id, x, y, time)`` for every stop including the
    origin; ``positions`` holds ``(slot, t, x, y)`` with the true location
    at the end of each slot the vehicle is active in.
    """

    vehicle_id: str
    service_id: str
    stops: tuple[tuple[str, float, float, float], ...]
    positions: tuple[tuple[int, float, float, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "stops", tuple(tuple(s) for s in self.stops))
        object.__setattr__(self, "positions", tuple(tuple(p) for p in self.positions))
