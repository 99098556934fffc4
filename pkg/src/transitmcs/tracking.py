"""Turn per-slot cluster centers into tracked journey vehicles.

Centers are snapped to the nearest direction-compatible route segment,
linked across slots by gated greedy nearest-neighbour matching, and used
to refresh each vehicle's position, segment departure time and arrival
estimate. Observed center speeds also feed running estimates of route
segment speed and travel time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

from .geometry import GeoPoint, geodesic_distance
from .model import ClusterCenter, JourneyService, JourneyVehicle, RouteSegment


@dataclass(frozen=True)
class TrackingConfig:
    assign_gate: float = 0.002  # max center-to-route distance, coordinate units
    association_gate: float = 0.004  # max prediction error, coordinate units
    max_missed: int = 2  # slots a track may go unmatched before expiring
    bearing_tolerance: float = 90.0  # degrees


@dataclass(frozen=True)
class Assignment:
    service_id: str | None
    rs_index: int | None
    distance: float

    @property
    def assigned(self) -> bool:
        return self.service_id is not None


UNASSIGNED = Assignment(None, None, math.inf)


def _point_segment(px, py, ax, ay, bx, by):
    """Planar distance from (px, py) to segment a-b and clamped fraction along it."""
    vx, vy = bx - ax, by - ay
    vv = vx * vx + vy * vy
    s = 0.0 if vv == 0 else min(1.0, max(0.0, ((px - ax) * vx + (py - ay) * vy) / vv))
    return math.hypot(px - (ax + s * vx), py - (ay + s * vy)), s


def _angle_diff(a: float, b: float) -> float:
    d = abs(a - b) % 360.0
    return min(d, 360.0 - d)


def _bearing(dx: float, dy: float) -> float:
    return math.degrees(math.atan2(dy, dx)) % 360.0


def assign_to_service(center: ClusterCenter, services: Sequence[JourneyService],
                      gate: float = TrackingConfig.assign_gate,
                      bearing_tolerance: float = TrackingConfig.bearing_tolerance) -> Assignment:
    """Route segment nearest the center midpoint among compatible bearings.

    Ties go to the smaller service id, then the smaller segment index, so
    the result does not depend on the order of ``services``. A center with
    no displacement is compatible with every bearing.
    """
    if not services:
        raise ValueError("no services to assign to")
    mid = center.midpoint
    dx, dy, _ = center.vector
    moving = dx != 0 or dy != 0
    heading = _bearing(dx, dy) if moving else None
    best = None
    for svc in services:
        for k, rs in enumerate(svc.rs):
            sx, sy = rs.n_a.x - rs.n_d.x, rs.n_a.y - rs.n_d.y
            if moving and (sx or sy) and _angle_diff(heading, _bearing(sx, sy)) > bearing_tolerance:
                continue
            d, _ = _point_segment(mid.x, mid.y, rs.n_d.x, rs.n_d.y, rs.n_a.x, rs.n_a.y)
            key = (d, svc.js_id, k)
            if best is None or key < best:
                best = key
    if best is None or best[0] > gate:
        return UNASSIGNED
    return Assignment(best[1], best[2], best[0])


@dataclass(frozen=True)
class VehicleTrack:
    track_id: int
    vehicle: JourneyVehicle | None
    history: tuple[tuple[int, ClusterCenter], ...] = ()
    missed: int = 0

    @property
    def last_slot(self) -> int | None:
        return self.history[-1][0] if self.history else None

    @property
    def last_center(self) -> ClusterCenter | None:
        return self.history[-1][1] if self.history else None

    @property
    def loc(self) -> GeoPoint | None:
        c = self.last_center
        return None if c is None else c.end.point

    def predict(self, t: float) -> GeoPoint:
        """Last end point advanced by the last center velocity to time ``t``."""
        c = self.last_center
        dx, dy, dt = c.vector
        lead = t - c.end.t
        return GeoPoint(c.end.x + dx / dt * lead, c.end.y + dy / dt * lead)


def _eta(center: ClusterCenter, rs: RouteSegment, previous_t_a: float | None):
    """Departure estimate for the segment and arrival estimate at its end node."""
    end = center.end
    now = end.t
    _, s = _point_segment(end.x, end.y, rs.n_d.x, rs.n_d.y, rs.n_a.x, rs.n_a.y)
    foot = GeoPoint(rs.n_d.x + s * (rs.n_a.x - rs.n_d.x), rs.n_d.y + s * (rs.n_a.y - rs.n_d.y))
    travelled = geodesic_distance(rs.n_d, foot)
    remaining = geodesic_distance(foot, rs.n_a)
    v = geodesic_distance(center.anchor.point, end.point) / center.vector[2]
    if v <= 0:
        return now, previous_t_a
    return now - travelled / v, now + remaining / v


def update_track(track: VehicleTrack, slot: int, center: ClusterCenter,
                 services: Sequence[JourneyService] | Mapping[str, JourneyService] = (),
                 config: TrackingConfig = TrackingConfig(),
                 assignment: Assignment | None = None) -> VehicleTrack:
    """Append ``center`` to the track and refresh the vehicle state.

    The arrival estimate is the center end time plus the remaining distance
    to the segment's arrival node over the center speed. A stationary
    center keeps the previous estimate.
    """
    if track.last_slot is not None and slot <= track.last_slot:
        raise ValueError(f"slot {slot} does not follow last tracked slot {track.last_slot}")
    svc_list = list(services.values()) if isinstance(services, Mapping) else list(services)
    if assignment is None:
        assignment = assign_to_service(center, svc_list, config.assign_gate,
                                       config.bearing_tolerance) if svc_list else UNASSIGNED
    history = track.history + ((slot, center),)
    old = track.vehicle
    loc = center.end.point
    if not assignment.assigned:
        vehicle = None if old is None else replace(old, loc=loc)
        return replace(track, vehicle=vehicle, history=history, missed=0)

    svc = next(s for s in svc_list if s.js_id == assignment.service_id)
    rs = svc.rs[assignment.rs_index]
    same_leg = old is not None and old.v_s == svc.js_id and old.rs == assignment.rs_index
    prev_t_a = old.t_a if same_leg else None
    t_d, t_a = _eta(center, rs, prev_t_a)
    if same_leg:
        t_d = old.t_d
    if t_a is None:
        t_a = t_d + rs.att
    t_a = max(t_a, t_d)
    dt = old.dt if (old is not None and old.v_s == svc.js_id) else t_d
    vehicle = JourneyVehicle(v_s=svc.js_id, dt=dt, rs=assignment.rs_index, loc=loc, t_d=t_d, t_a=t_a)
    return replace(track, vehicle=vehicle, history=history, missed=0)


def associate_across_slots(tracks: Sequence[VehicleTrack], centers: Sequence[ClusterCenter],
                           slot: int, services: Sequence[JourneyService] = (),
                           config: TrackingConfig = TrackingConfig(), next_id: int = 0):
    """Match current centers to existing tracks; start and expire tracks.

    Candidate (track, center) pairs within the association gate are taken
    greedily by ascending prediction error, ties going to the older track.
    Returns ``(active, expired)``; ``active`` lists surviving tracks in
    creation order followed by new tracks.
    """
    pairs = []
    for ti, tr in enumerate(tracks):
        if not tr.history:
            continue
        for ci, c in enumerate(centers):
            p = tr.predict(c.anchor.t + c.vector[2] / 2)
            m = c.midpoint
            d = math.hypot(p.x - m.x, p.y - m.y)
            if d <= config.association_gate:
                pairs.append((d, ti, ci))
    pairs.sort()
    used_t, used_c = set(), set()
    match = {}
    for d, ti, ci in pairs:
        if ti in used_t or ci in used_c:
            continue
        used_t.add(ti)
        used_c.add(ci)
        match[ti] = ci

    active, expired = [], []
    for ti, tr in enumerate(tracks):
        if ti in match:
            active.append(update_track(tr, slot, centers[match[ti]], services, config))
        else:
            aged = replace(tr, missed=tr.missed + 1)
            (expired if aged.missed > config.max_missed else active).append(aged)
    for ci, c in enumerate(centers):
        if ci not in used_c:
            active.append(update_track(VehicleTrack(next_id, None), slot, c, services, config))
            next_id += 1
    return active, expired


@dataclass
class Tracker:
    """Stateful coordinator feeding slot results in order."""

    services: Sequence[JourneyService]
    config: TrackingConfig = field(default_factory=TrackingConfig)
    active: list[VehicleTrack] = field(default_factory=list)
    expired: list[VehicleTrack] = field(default_factory=list)
    next_id: int = 0
    # (service id, segment index) -> observed speeds in m/s
    speed_samples: dict = field(default_factory=dict)

    def step(self, slot: int, centers: Sequence[ClusterCenter]) -> list[VehicleTrack]:
        active, expired = associate_across_slots(self.active, centers, slot, self.services,
                                                 self.config, self.next_id)
        self.next_id += sum(1 for t in active if t.track_id >= self.next_id)
        self.active = active
        self.expired.extend(expired)
        for tr in active:
            if tr.last_slot == slot and tr.vehicle is not None and tr.missed == 0:
                c = tr.last_center
                v = geodesic_distance(c.anchor.point, c.end.point) / c.vector[2]
                self.speed_samples.setdefault((tr.vehicle.v_s, tr.vehicle.rs), []).append(v)
        return active

    def updated_route_segments(self) -> dict[tuple[str, int], RouteSegment]:
        """Route segments with speed and travel time re-estimated from observations."""
        out = {}
        by_id = {s.js_id: s for s in self.services}
        for (sid, k), speeds in sorted(self.speed_samples.items()):
            rs = by_id[sid].rs[k]
            v = sum(speeds) / len(speeds)
            if v > 0:
                out[(sid, k)] = replace(rs, speed=v, att=rs.dist / v)
        return out

    def all_tracks(self) -> list[VehicleTrack]:
        return sorted(self.active + self.expired, key=lambda t: t.track_id)
