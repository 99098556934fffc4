"""Geometric and kinematic primitives on points and trajectory segments.

Clustering geometry is planar: coordinates are used as-is (degrees for
lat/lon data). Only :func:`geodesic_distance` works in meters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSegmentError, InvalidCoordinateError, InvalidSegmentError

EARTH_RADIUS_M = 6_371_000.0

# relative tolerance for the d1 == d2 case of the following degree
FD_EQUAL_RTOL = 1e-9


@dataclass(frozen=True, slots=True)
class GeoPoint:
    x: float  # longitude or projected abscissa
    y: float  # latitude or projected ordinate

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise InvalidCoordinateError(f"non-finite coordinate ({self.x}, {self.y})")

    def __iter__(self):
        yield self.x
        yield self.y

    @property
    def lat(self) -> float:
        return self.y

    @property
    def lon(self) -> float:
        return self.x


@dataclass(frozen=True, slots=True)
class TimestampedPoint:
    point: GeoPoint
    t: float

    def __post_init__(self):
        object.__setattr__(self, "t", float(self.t))
        if not math.isfinite(self.t):
            raise InvalidCoordinateError(f"non-finite timestamp {self.t}")

    @classmethod
    def of(cls, x, y, t) -> "TimestampedPoint":
        return cls(GeoPoint(float(x), float(y)), float(t))

    @property
    def x(self) -> float:
        return self.point.x

    @property
    def y(self) -> float:
        return self.point.y


@dataclass(frozen=True, slots=True)
class TrajectorySegment:
    """Directed segment between two consecutive pings of one sensor."""

    sensor_id: str
    start: TimestampedPoint
    end: TimestampedPoint

    def __post_init__(self):
        if not self.start.t < self.end.t:
            raise InvalidSegmentError(
                f"segment of sensor {self.sensor_id!r} has start.t={self.start.t} >= end.t={self.end.t}"
            )

    @classmethod
    def of(cls, sensor_id, x0, y0, t0, x1, y1, t1) -> "TrajectorySegment":
        return cls(sensor_id, TimestampedPoint.of(x0, y0, t0), TimestampedPoint.of(x1, y1, t1))

    @property
    def dx(self) -> float:
        return self.end.x - self.start.x

    @property
    def dy(self) -> float:
        return self.end.y - self.start.y

    @property
    def dt(self) -> float:
        return self.end.t - self.start.t

    @property
    def vector(self) -> tuple[float, float, float]:
        return (self.dx, self.dy, self.dt)

    @property
    def length(self) -> float:
        return math.hypot(self.dx, self.dy)

    @property
    def is_degenerate(self) -> bool:
        return self.dx == 0.0 and self.dy == 0.0

    @property
    def midpoint(self) -> GeoPoint:
        return GeoPoint((self.start.x + self.end.x) / 2, (self.start.y + self.end.y) / 2)

    @property
    def key(self) -> tuple:
        """Canonical ordering key: sensor, time, then geometry."""
        return (str(self.sensor_id), self.start.t, self.start.x, self.start.y,
                self.end.x, self.end.y, self.end.t)

    @property
    def segment_id(self) -> str:
        return f"{self.sensor_id}@{self.start.t!r}"

    def coords(self) -> tuple[float, float, float, float]:
        return (self.start.x, self.start.y, self.end.x, self.end.y)

    def reversed(self) -> "TrajectorySegment":
        """Same timing, swapped endpoints."""
        return TrajectorySegment(
            self.sensor_id,
            TimestampedPoint(self.end.point, self.start.t),
            TimestampedPoint(self.start.point, self.end.t),
        )

    def translated(self, dx: float, dy: float) -> "TrajectorySegment":
        return TrajectorySegment.of(
            self.sensor_id,
            self.start.x + dx, self.start.y + dy, self.start.t,
            self.end.x + dx, self.end.y + dy, self.end.t,
        )


def _require_line(seg: TrajectorySegment):
    if seg.is_degenerate:
        raise DegenerateSegmentError(f"segment of sensor {seg.sensor_id!r} has zero length")


def project_onto_line(p: GeoPoint, seg: TrajectorySegment) -> tuple[GeoPoint, float]:
    """Orthogonal projection of ``p`` onto the infinite line through ``seg``.

    Returns the foot point and its signed offset along the segment
    direction, measured from ``seg.start``.
    """
    _require_line(seg)
    L = seg.length
    ux, uy = seg.dx / L, seg.dy / L
    offset = (p.x - seg.start.x) * ux + (p.y - seg.start.y) * uy
    return GeoPoint(seg.start.x + offset * ux, seg.start.y + offset * uy), offset


# ---------------------------------------------------------------------------
# Vectorized distance kernel. Rows are (sx, sy, ex, ey).
# ---------------------------------------------------------------------------

def _components(base: np.ndarray, other: np.ndarray):
    """Perpendicular, parallel and angle terms with ``base`` as projection line.

    Rows where the base has zero length yield NaN.
    """
    bsx, bsy, bex, bey = base.T
    osx, osy, oex, oey = other.T
    vx = bex - bsx
    vy = bey - bsy
    L = np.hypot(vx, vy)
    with np.errstate(divide="ignore", invalid="ignore"):
        # start/end of `other` relative to base start
        dsx, dsy = osx - bsx, osy - bsy
        dex, dey = oex - bsx, oey - bsy
        perp1 = np.abs(vx * dsy - vy * dsx) / L
        perp2 = np.abs(vx * dey - vy * dex) / L
        psum = perp1 + perp2
        d_perp = np.where(psum > 0, (perp1 * perp1 + perp2 * perp2) / psum, 0.0)
        d_perp = np.where(L > 0, d_perp, np.nan)

        off_s = (vx * dsx + vy * dsy) / L
        off_e = (vx * dex + vy * dey) / L
        d_par = np.minimum(np.abs(off_s), np.abs(L - off_e))

        wx, wy = oex - osx, oey - osy
        # |w| sin(theta) == |v x w| / |v|, theta in [0, 180]
        d_theta = np.abs(vx * wy - vy * wx) / L
    return d_perp, d_par, d_theta


def _base_first(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Boolean mask: True where row of ``a`` is the projection base.

    The longer segment is the base; equal lengths fall back to the
    lexicographically smaller (sx, sy, ex, ey).
    """
    la = np.hypot(a[:, 2] - a[:, 0], a[:, 3] - a[:, 1])
    lb = np.hypot(b[:, 2] - b[:, 0], b[:, 3] - b[:, 1])
    lex = np.ones(len(a), dtype=bool)
    for col in (3, 2, 1, 0):
        lex = np.where(a[:, col] < b[:, col], True, np.where(a[:, col] > b[:, col], False, lex))
    return np.where(la > lb, True, np.where(la < lb, False, lex))


def segment_distance_arrays(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise three-part segment distance between ``a[i]`` and ``b[i]``."""
    a = np.asarray(a, dtype=float).reshape(-1, 4)
    b = np.asarray(b, dtype=float).reshape(-1, 4)
    first = _base_first(a, b)[:, None]
    base = np.where(first, a, b)
    other = np.where(first, b, a)
    d_perp, d_par, d_theta = _components(base, other)
    d = d_perp + d_par + d_theta
    # longer segment degenerate => both degenerate: plain start-point distance
    fallback = np.hypot(a[:, 0] - b[:, 0], a[:, 1] - b[:, 1])
    return np.where(np.isnan(d), fallback, d)


def _one(ts: TrajectorySegment) -> np.ndarray:
    return np.array([ts.coords()], dtype=float)


def perpendicular_distance(ts1: TrajectorySegment, ts2: TrajectorySegment) -> float:
    """Lehmer-mean perpendicular offset of ``ts2`` from the line of ``ts1``."""
    _require_line(ts1)
    return float(_components(_one(ts1), _one(ts2))[0][0])


def parallel_distance(ts1: TrajectorySegment, ts2: TrajectorySegment) -> float:
    _require_line(ts1)
    return float(_components(_one(ts1), _one(ts2))[1][0])


def angle_distance(ts1: TrajectorySegment, ts2: TrajectorySegment) -> float:
    """``length(ts2) * sin(theta)``; zero when either segment has no direction."""
    if ts1.is_degenerate or ts2.is_degenerate:
        return 0.0
    return float(_components(_one(ts1), _one(ts2))[2][0])


def segment_distance(ts1: TrajectorySegment, ts2: TrajectorySegment) -> float:
    """Symmetric distance d_perp + d_par + d_theta, longer segment as base."""
    return float(segment_distance_arrays(_one(ts1), _one(ts2))[0])


def following_degree_values(d1, d2):
    """Vectorized following degree from start gaps ``d1`` and end gaps ``d2``."""
    d1 = np.asarray(d1, dtype=float)
    d2 = np.asarray(d2, dtype=float)
    equal = np.isclose(d1, d2, rtol=FD_EQUAL_RTOL, atol=0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = d2 / d1
    return np.where(equal, 1.0, np.where(d1 < d2, -1.0, ratio))


def following_degree(ts1: TrajectorySegment, ts2: TrajectorySegment) -> float:
    """1 for parallel, -1 for diverging, d2/d1 for converging pairs."""
    d1 = math.hypot(ts1.start.x - ts2.start.x, ts1.start.y - ts2.start.y)
    d2 = math.hypot(ts1.end.x - ts2.end.x, ts1.end.y - ts2.end.y)
    return float(following_degree_values(d1, d2))


def direction(ts: TrajectorySegment) -> float:
    """Counterclockwise angle from the +x (east) axis, in [0, 360)."""
    _require_line(ts)
    ang = math.degrees(math.atan2(ts.dy, ts.dx)) % 360.0
    # -tiny % 360 rounds to 360.0
    return 0.0 if ang >= 360.0 else ang


def direction_values(dx, dy):
    ang = np.degrees(np.arctan2(dy, dx)) % 360.0
    return np.where(ang >= 360.0, 0.0, ang)


def speed(ts: TrajectorySegment) -> float:
    """Planar length over elapsed time, in coordinate units per second."""
    if not ts.dt > 0:
        raise InvalidSegmentError(f"non-positive time delta {ts.dt}")
    return ts.length / ts.dt


def _check_latlon(p: GeoPoint):
    if not (-90.0 <= p.y <= 90.0 and -180.0 <= p.x <= 180.0):
        raise InvalidCoordinateError(f"lat/lon out of range: lat={p.y}, lon={p.x}")


def geodesic_distance(a: GeoPoint, b: GeoPoint, radius: float = EARTH_RADIUS_M) -> float:
    """Haversine great-circle distance in meters (x = lon, y = lat)."""
    _check_latlon(a)
    _check_latlon(b)
    return float(haversine_m(a.y, a.x, b.y, b.x, radius))


def haversine_m(lat1, lon1, lat2, lon2, radius: float = EARTH_RADIUS_M):
    lat1, lon1, lat2, lon2 = map(np.radians, (lat1, lon1, lat2, lon2))
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def point_segment_distance_m(lat, lon, a_lat, a_lon, b_lat, b_lon, radius: float = EARTH_RADIUS_M):
    """Approximate geodesic distance from points to a great-circle segment.

    The closest point is found in a local equirectangular plane around each
    query point, then measured with the haversine formula. Accurate for the
    short distances a buffer filter cares about.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    k = np.cos(np.radians(lat))
    ax, ay = (a_lon - lon) * k, a_lat - lat
    bx, by = (b_lon - lon) * k, b_lat - lat
    vx, vy = bx - ax, by - ay
    vv = vx * vx + vy * vy
    with np.errstate(divide="ignore", invalid="ignore"):
        s = np.where(vv > 0, -(ax * vx + ay * vy) / vv, 0.0)
    s = np.clip(s, 0.0, 1.0)
    c_lat = a_lat + s * (b_lat - a_lat)
    c_lon = a_lon + s * (b_lon - a_lon)
    return haversine_m(lat, lon, c_lat, c_lon, radius)
