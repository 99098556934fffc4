"""Synthetic crowdsourced sensors riding scheduled transit vehicles.

Every inter-stop leg of a trip gets its own group of simulated riders.
Riders ping on a global clock grid (multiples of ``ping_interval``) at the
vehicle's timetable-interpolated position plus isotropic Gaussian jitter.
Their pings cover the leg from the last grid tick at or before departure
to the first grid tick at or after arrival, so consecutive legs share the
slot that contains each stop.
"""
from __future__ import annotations

import math
import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .geometry import (
    EARTH_RADIUS_M,
    GeoPoint,
    TimestampedPoint,
    geodesic_distance,
    point_segment_distance_m,
)
from .io import parse_schedule
from .model import (
    JourneyService,
    RouteSegment,
    ScheduledTrip,
    SensorTrajectory,
    VehicleTruth,
    slot_index,
)

# 3 sigma of about 8 m keeps jittered riders inside the default 10 m buffer
DEFAULT_JITTER_DEG = 2.5e-5
_M_PER_DEG = EARTH_RADIUS_M * math.pi / 180.0


@dataclass(frozen=True)
class SimulationConfig:
    sensors_per_segment: int = 40
    position_jitter: float = DEFAULT_JITTER_DEG  # std-dev, coordinate units
    ping_interval: float = 10.0
    off_route_sensor_fraction: float = 0.0
    rng_seed: int = 0
    prefilter_radius_m: float = 10.0
    # "sensors": n riders per leg; "pings": one rider per leg with n pings
    geolocation_mode: str = "sensors"
    prefilter_mode: str = "sensor"  # or "ping"
    noise_step: float = 5e-4  # random-walk step std-dev, coordinate units

    def __post_init__(self):
        if self.sensors_per_segment < 0:
            raise ValueError("sensors_per_segment must be >= 0")
        if not self.position_jitter >= 0:
            raise ValueError("position_jitter must be >= 0")
        if not self.ping_interval > 0:
            raise ValueError("ping_interval must be positive")
        if not 0.0 <= self.off_route_sensor_fraction <= 1.0:
            raise ValueError("off_route_sensor_fraction must be within [0, 1]")
        if not self.prefilter_radius_m >= 0:
            raise ValueError("prefilter_radius_m must be >= 0")
        if self.geolocation_mode not in ("sensors", "pings"):
            raise ValueError(f"unknown geolocation_mode {self.geolocation_mode!r}")
        if self.prefilter_mode not in ("sensor", "ping"):
            raise ValueError(f"unknown prefilter_mode {self.prefilter_mode!r}")


def load_schedule(source) -> tuple[list[JourneyService], list[ScheduledTrip]]:
    """Services and scheduled trips from a schedule file (path or file-like)."""
    return parse_schedule(source)


def _rng(seed: int, label: str) -> np.random.Generator:
    return np.random.default_rng([int(seed), zlib.crc32(label.encode())])


def vehicle_positions(service: JourneyService, trip: ScheduledTrip, times) -> np.ndarray:
    """Timetable-interpolated (x, y) of the vehicle, clamped to the trip span."""
    poly = service.polyline
    xs = np.array([p.x for p in poly])
    ys = np.array([p.y for p in poly])
    st = np.asarray(trip.stop_times, dtype=float)
    t = np.clip(np.asarray(times, dtype=float), st[0], st[-1])
    return np.column_stack([np.interp(t, st, xs), np.interp(t, st, ys)])


def _grid(t_from: float, t_to: float, step: float) -> np.ndarray:
    k0 = math.floor(t_from / step)
    k1 = math.ceil(t_to / step)
    return np.arange(k0, k1 + 1) * step


def generate_sensors(trip: ScheduledTrip, service: JourneyService,
                     config: SimulationConfig, time_window=None) -> list[SensorTrajectory]:
    """Simulated riders for one trip; ids are ``<trip>:<leg>:<rider>``.

    ``time_window=(t_from, t_to)`` keeps only pings inside that closed
    interval; the random draws do not depend on it.
    """
    rng = _rng(config.rng_seed, trip.trip_id)
    n = config.sensors_per_segment
    out = []
    if n == 0:
        return out
    for leg in range(len(service.rs)):
        t_dep, t_arr = trip.stop_times[leg], trip.stop_times[leg + 1]
        if config.geolocation_mode == "sensors":
            times = _grid(t_dep, t_arr, config.ping_interval)
            riders = [f"{trip.trip_id}:{leg:02d}:{i:02d}" for i in range(n)]
        else:
            times = np.linspace(t_dep, t_arr, n) if n > 1 else np.array([t_dep])
            riders = [f"{trip.trip_id}:{leg:02d}:00"]
        noise = rng.normal(0.0, config.position_jitter, size=(len(riders), len(times), 2))
        if time_window is not None:
            keep = (times >= time_window[0]) & (times <= time_window[1])
            if not keep.any():
                continue
            times, noise = times[keep], noise[:, keep]
        pos = vehicle_positions(service, trip, times)
        for r, sid in enumerate(riders):
            xy = pos + noise[r] if config.position_jitter > 0 else pos
            out.append(SensorTrajectory(sid, tuple(
                TimestampedPoint.of(x, y, t) for (x, y), t in zip(xy.tolist(), times.tolist()))))
    return out


def generate_noise_sensors(region, config: SimulationConfig, n_on_route: int,
                           t_start: float, t_end: float) -> list[SensorTrajectory]:
    """Random walkers inside ``region = (min_x, min_y, max_x, max_y)``.

    Their number is ``round(off_route_sensor_fraction * n_on_route)``.
    """
    x0, y0, x1, y1 = region
    if not (x1 > x0 and y1 > y0):
        raise ValueError(f"empty region {region}")
    count = int(round(config.off_route_sensor_fraction * n_on_route))
    if count == 0:
        return []
    rng = _rng(config.rng_seed, "noise")
    times = _grid(t_start, t_end, config.ping_interval)
    out = []
    for i in range(count):
        start = rng.uniform((x0, y0), (x1, y1))
        steps = rng.normal(0.0, config.noise_step, size=(len(times) - 1, 2))
        walk = np.vstack([start, start + np.cumsum(steps, axis=0)])
        # fold back into the region
        for dim, (lo, hi) in enumerate(((x0, x1), (y0, y1))):
            span = hi - lo
            u = np.mod(walk[:, dim] - lo, 2 * span)
            walk[:, dim] = lo + np.where(u > span, 2 * span - u, u)
        out.append(SensorTrajectory(f"noise:{i:05d}", tuple(
            TimestampedPoint.of(x, y, t) for (x, y), t in zip(walk.tolist(), times.tolist()))))
    return out


def _polyline_distances_m(lat: np.ndarray, lon: np.ndarray, polylines, radius_m: float) -> np.ndarray:
    """Distance in meters from each point to the nearest polyline.

    Points farther than ``radius_m`` from every polyline may get ``inf``
    instead of their true distance.
    """
    best = np.full(len(lat), np.inf)
    if len(lat) == 0:
        return best
    lat0 = float(np.mean(lat))
    k = math.cos(math.radians(lat0))
    tree = cKDTree(np.column_stack([lon * k, lat]) * _M_PER_DEG)
    for poly in polylines:
        for a, b in zip(poly[:-1], poly[1:]):
            ax, ay = a.x * k * _M_PER_DEG, a.y * _M_PER_DEG
            bx, by = b.x * k * _M_PER_DEG, b.y * _M_PER_DEG
            half = 0.5 * math.hypot(bx - ax, by - ay)
            # generous margin for the planar approximation
            r = 1.05 * half + 1.5 * radius_m + 1.0
            idx = tree.query_ball_point([(ax + bx) / 2, (ay + by) / 2], r)
            if not idx:
                continue
            idx = np.asarray(idx)
            d = point_segment_distance_m(lat[idx], lon[idx], a.y, a.x, b.y, b.x)
            best[idx] = np.minimum(best[idx], d)
    return best


def prefilter(sensors: Sequence[SensorTrajectory], route_polyline, radius_m: float,
              mode: str = "sensor") -> list[SensorTrajectory]:
    """Keep sensors inside the buffer of radius ``radius_m`` around a route.

    ``route_polyline`` is one polyline (list of GeoPoint) or a list of
    polylines, in which case the buffer is their union. In ``"sensor"``
    mode a trajectory survives only if all its pings are inside; in
    ``"ping"`` mode outside pings are dropped and trajectories with no
    remaining ping are removed.
    """
    polylines = [route_polyline] if route_polyline and isinstance(route_polyline[0], GeoPoint) \
        else list(route_polyline)
    for poly in polylines:
        if len(poly) < 2:
            raise ValueError("a route polyline needs at least two points")
    if mode not in ("sensor", "ping"):
        raise ValueError(f"unknown prefilter mode {mode!r}")
    if not sensors:
        return []
    lat = np.array([p.y for tr in sensors for p in tr.points])
    lon = np.array([p.x for tr in sensors for p in tr.points])
    inside = _polyline_distances_m(lat, lon, polylines, radius_m) <= radius_m
    out = []
    pos = 0
    for tr in sensors:
        m = inside[pos:pos + len(tr.points)]
        pos += len(tr.points)
        if mode == "sensor":
            if m.all():
                out.append(tr)
        elif m.any():
            out.append(tr if m.all() else
                       SensorTrajectory(tr.sensor_id, tuple(p for p, ok in zip(tr.points, m) if ok)))
    return out


def vehicle_truth(trip: ScheduledTrip, service: JourneyService, delta_t: float,
                  t0: float = 0.0) -> VehicleTruth:
    """True stop times and end-of-slot positions of the vehicle serving ``trip``."""
    ids = service.stop_ids or tuple(f"{service.js_id}-{k}" for k in range(len(service.rs) + 1))
    stops = tuple((sid, p.x, p.y, float(t))
                  for sid, p, t in zip(ids, service.polyline, trip.stop_times))
    first = slot_index(trip.departure, delta_t, t0)
    last = math.ceil((trip.arrival - t0) / delta_t) - 1
    slots = list(range(first, last + 1))
    ends = np.array([t0 + (k + 1) * delta_t for k in slots], dtype=float)
    xy = vehicle_positions(service, trip, ends)
    positions = tuple((k, float(t), float(x), float(y)) for k, t, (x, y) in zip(slots, ends, xy))
    return VehicleTruth(trip.trip_id, service.js_id, stops, positions)


def simulate(services: Sequence[JourneyService], trips: Sequence[ScheduledTrip],
             config: SimulationConfig, delta_t: float | None = None, t0: float = 0.0,
             region=None, time_window=None):
    """Riders, noise walkers and ground truth for every trip.

    Returns ``(on_route, noise, truths)``. ``region`` defaults to the
    bounding box of all stops padded by 0.01 units. ``time_window``
    restricts rider pings (see :func:`generate_sensors`).
    """
    by_id = {s.js_id: s for s in services}
    delta_t = config.ping_interval if delta_t is None else delta_t
    on_route, truths = [], []
    for trip in trips:
        svc = by_id[trip.service_id]
        on_route.extend(generate_sensors(trip, svc, config, time_window))
        truths.append(vehicle_truth(trip, svc, delta_t, t0))
    noise = []
    if config.off_route_sensor_fraction > 0 and trips:
        if region is None:
            pts = [p for s in services for p in s.polyline]
            region = (min(p.x for p in pts) - 0.01, min(p.y for p in pts) - 0.01,
                      max(p.x for p in pts) + 0.01, max(p.y for p in pts) + 0.01)
        t_start = min(t.departure for t in trips)
        t_end = max(t.arrival for t in trips)
        noise = generate_noise_sensors(region, config, len(on_route), t_start, t_end)
    return on_route, noise, truths


def synthetic_network(n_services: int = 1, n_segments: int = 16, journey_s: float = 540.0,
                      trips_per_service: int = 1, headway_s: float = 600.0,
                      origin=(-73.8095, 40.7296), spacing: float = 0.05,
                      seed: int = 0, speed_jitter: float = 0.2):
    """Build a toy network of straight-ish bus lines laid out on a grid.

    Each service has ``n_segments`` legs and a journey of ``journey_s``
    seconds (defaults echo a short urban bus line); lines are ``spacing``
    degrees apart so they never share road. Returns ``(services, trips)``.
    """
    rng = np.random.default_rng(seed)
    cols = max(1, math.ceil(math.sqrt(n_services)))
    services, trips = [], []
    for s in range(n_services):
        ox = origin[0] + (s % cols) * spacing
        oy = origin[1] + (s // cols) * spacing
        heading = rng.uniform(0, 2 * math.pi)
        leg_m = rng.uniform(180.0, 280.0, n_segments)
        turns = rng.normal(0.0, 0.25, n_segments)
        pts = [(ox, oy)]
        h = heading
        for k in range(n_segments):
            h += turns[k]
            x, y = pts[-1]
            dlat = leg_m[k] * math.sin(h) / _M_PER_DEG
            dlon = leg_m[k] * math.cos(h) / (_M_PER_DEG * math.cos(math.radians(y)))
            pts.append((x + dlon, y + dlat))
        weights = leg_m * rng.uniform(1 - speed_jitter, 1 + speed_jitter, n_segments)
        cum = np.concatenate([[0.0], np.cumsum(weights)])
        offsets = np.round(cum / cum[-1] * journey_s, 3)
        sid = f"S{s:03d}"
        stop_ids = tuple(f"{sid}-{k:02d}" for k in range(n_segments + 1))
        seg_list = []
        poly = [GeoPoint(x, y) for x, y in pts]
        for k in range(n_segments):
            dist = geodesic_distance(poly[k], poly[k + 1])
            att = float(offsets[k + 1] - offsets[k])
            seg_list.append(RouteSegment(poly[k], poly[k + 1], dist, dist / att, att))
        deps = tuple(float(j * headway_s) for j in range(trips_per_service))
        services.append(JourneyService(sid, tuple(seg_list), deps, stop_ids))
        for j, dep in enumerate(deps):
            trips.append(ScheduledTrip(f"{sid}-T{j:02d}", sid, tuple(float(dep + o) for o in offsets)))
    return services, trips
