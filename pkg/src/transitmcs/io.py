"""Versioned file formats: ping tables, schedules, clusters, truth, reports.

Floats are written with ``repr`` so every format round-trips exactly.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import OrderedDict
from pathlib import Path

from .errors import FormatError, ScheduleError
from .geometry import GeoPoint, TimestampedPoint, TrajectorySegment, haversine_m
from .model import (
    Cluster,
    ClusterCenter,
    JourneyService,
    RouteSegment,
    ScheduledTrip,
    SensorTrajectory,
    VehicleTruth,
)

PINGS_HEADER = "# transitmcs-pings v1"
SCHEDULE_HEADER = "# transitmcs-schedule v1"
CLUSTERS_FORMAT = "transitmcs-clusters"
TRUTH_FORMAT = "transitmcs-truth"
REPORT_FORMAT = "transitmcs-report"
VEHICLES_HEADER = "# transitmcs-vehicles v1"
FORMAT_VERSION = 1

PING_COLUMNS = ["sensor_id", "t", "lat", "lon"]


def _text(source) -> tuple[str, str | None]:
    """Read ``source`` (path or file-like) into a string."""
    if hasattr(source, "read"):
        return source.read(), getattr(source, "name", None)
    p = Path(source)
    return p.read_text(), str(p)


# ---------------------------------------------------------------------------
# Ping table
# ---------------------------------------------------------------------------

def write_pings(path, trajectories) -> int:
    """Write trajectories as a ping table sorted by (sensor_id, t); returns row count."""
    rows = []
    for tr in trajectories:
        for p in tr.points:
            rows.append((str(tr.sensor_id), p.t, p.y, p.x))
    rows.sort(key=lambda r: (r[0], r[1]))
    buf = io.StringIO()
    buf.write(PINGS_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PING_COLUMNS)
    for sid, t, lat, lon in rows:
        w.writerow([sid, repr(t), repr(lat), repr(lon)])
    Path(path).write_text(buf.getvalue())
    return len(rows)


def read_pings(source) -> list[SensorTrajectory]:
    text, name = _text(source)
    lines = text.splitlines()
    if not lines or lines[0].strip() != PINGS_HEADER:
        raise FormatError(f"missing header {PINGS_HEADER!r}", line=1, path=name)
    reader = csv.reader(lines[1:])
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError("missing column header row", line=2, path=name) from None
    if header != PING_COLUMNS:
        raise FormatError(f"expected columns {PING_COLUMNS}, got {header}", line=2, path=name)
    points: dict[str, list] = OrderedDict()
    for lineno, row in enumerate(reader, start=3):
        if not row:
            continue
        if len(row) != 4:
            raise FormatError(f"expected 4 fields, got {len(row)}", line=lineno, path=name)
        sid, t, lat, lon = row
        try:
            tp = TimestampedPoint.of(float(lon), float(lat), float(t))
        except ValueError as exc:
            raise FormatError(f"bad numeric field: {exc}", line=lineno, path=name) from None
        pts = points.setdefault(sid, [])
        if pts and not pts[-1][1].t < tp.t:
            raise FormatError(f"timestamps of sensor {sid!r} not strictly increasing",
                              line=lineno, path=name)
        pts.append((lineno, tp))
    return [SensorTrajectory(sid, tuple(tp for _, tp in pts)) for sid, pts in points.items()]


# ---------------------------------------------------------------------------
# Schedule
#
#   # transitmcs-schedule v1
#   service,<service_id>
#   stop,<service_id>,<stop_id>,<lat>,<lon>
#   trip,<service_id>,<trip_id>,<time at stop 0>,<time at stop 1>,...
# ---------------------------------------------------------------------------

def parse_schedule(source) -> tuple[list[JourneyService], list[ScheduledTrip]]:
    """Parse a schedule file into services and their timetabled trips.

    Route segment distance is the haversine distance between consecutive
    stops, travel time is the mean timetable difference over all trips, and
    speed is their ratio.
    """
    text, _ = _text(source)
    lines = text.splitlines()
    if not lines or lines[0].strip() != SCHEDULE_HEADER:
        raise ScheduleError(f"missing header {SCHEDULE_HEADER!r}", line=1)
    order: list[str] = []
    decl_line: dict[str, int] = {}
    stops: dict[str, list[tuple[str, float, float]]] = {}
    trips: list[tuple[int, ScheduledTrip]] = []
    trip_ids: set[str] = set()
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        row = [c.strip() for c in row]
        if not row or not row[0] or row[0].startswith("#"):
            continue
        kind = row[0]
        if kind == "service":
            if len(row) != 2 or not row[1]:
                raise ScheduleError("service record needs exactly one id", line=lineno)
            sid = row[1]
            if sid in stops:
                raise ScheduleError(f"duplicate service {sid!r}", line=lineno)
            order.append(sid)
            decl_line[sid] = lineno
            stops[sid] = []
        elif kind == "stop":
            if len(row) != 5 or not row[3] or not row[4]:
                raise ScheduleError("stop record needs service, stop id, lat and lon", line=lineno)
            sid, stop_id = row[1], row[2]
            if sid not in stops:
                raise ScheduleError(f"stop for undeclared service {sid!r}", line=lineno)
            try:
                lat, lon = float(row[3]), float(row[4])
            except ValueError:
                raise ScheduleError(f"stop {stop_id!r} has non-numeric coordinates", line=lineno) from None
            if not (math.isfinite(lat) and math.isfinite(lon) and -90 <= lat <= 90 and -180 <= lon <= 180):
                raise ScheduleError(f"stop {stop_id!r} coordinates out of range", line=lineno)
            stops[sid].append((stop_id, lat, lon))
        elif kind == "trip":
            if len(row) < 4:
                raise ScheduleError("trip record needs service, trip id and stop times", line=lineno)
            sid, trip_id = row[1], row[2]
            if sid not in stops:
                raise ScheduleError(f"trip for undeclared service {sid!r}", line=lineno)
            if trip_id in trip_ids:
                raise ScheduleError(f"duplicate trip {trip_id!r}", line=lineno)
            try:
                times = tuple(float(x) for x in row[3:])
            except ValueError:
                raise ScheduleError(f"trip {trip_id!r} has non-numeric stop times", line=lineno) from None
            for k in range(1, len(times)):
                if not times[k - 1] < times[k]:
                    raise ScheduleError(
                        f"trip {trip_id!r} times not increasing at stop index {k}", line=lineno)
            trip_ids.add(trip_id)
            trips.append((lineno, ScheduledTrip(trip_id, sid, times)))
        else:
            raise ScheduleError(f"unknown record type {kind!r}", line=lineno)

    by_service: dict[str, list[ScheduledTrip]] = {sid: [] for sid in order}
    for lineno, trip in trips:
        n = len(stops[trip.service_id])
        if len(trip.stop_times) != n:
            raise ScheduleError(
                f"trip {trip.trip_id!r} has {len(trip.stop_times)} stop times for {n} stops", line=lineno)
        by_service[trip.service_id].append(trip)

    services = []
    for sid in order:
        st = stops[sid]
        if len(st) < 2:
            raise ScheduleError(f"service {sid!r} needs at least two stops", line=decl_line[sid])
        tr = by_service[sid]
        if not tr:
            raise ScheduleError(f"service {sid!r} has no trips", line=decl_line[sid])
        segs = []
        for k in range(len(st) - 1):
            (_, lat0, lon0), (_, lat1, lon1) = st[k], st[k + 1]
            dist = float(haversine_m(lat0, lon0, lat1, lon1))
            att = sum(t.stop_times[k + 1] - t.stop_times[k] for t in tr) / len(tr)
            segs.append(RouteSegment(GeoPoint(lon0, lat0), GeoPoint(lon1, lat1), dist, dist / att, att))
        services.append(JourneyService(
            sid, tuple(segs), tuple(sorted(t.departure for t in tr)), tuple(s[0] for s in st)))
    return services, [t for _, t in trips]


def format_schedule(services, trips) -> str:
    buf = io.StringIO()
    buf.write(SCHEDULE_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    for svc in services:
        w.writerow(["service", svc.js_id])
        ids = svc.stop_ids or tuple(f"{svc.js_id}-{k}" for k in range(len(svc.rs) + 1))
        for stop_id, p in zip(ids, svc.polyline):
            w.writerow(["stop", svc.js_id, stop_id, repr(float(p.y)), repr(float(p.x))])
    for trip in trips:
        w.writerow(["trip", trip.service_id, trip.trip_id] + [repr(float(t)) for t in trip.stop_times])
    return buf.getvalue()


def write_schedule(path, services, trips):
    Path(path).write_text(format_schedule(services, trips))


# ---------------------------------------------------------------------------
# Clusters
# ---------------------------------------------------------------------------

def _seg_record(s: TrajectorySegment) -> list:
    return [str(s.sensor_id), s.start.t, s.start.y, s.start.x, s.end.t, s.end.y, s.end.x]


def _seg_from_record(r) -> TrajectorySegment:
    sid, t0, lat0, lon0, t1, lat1, lon1 = r
    return TrajectorySegment.of(sid, lon0, lat0, t0, lon1, lat1, t1)


def _center_record(c: ClusterCenter) -> dict:
    dx, dy, dt = c.vector
    return {"anchor": {"lat": c.anchor.y, "lon": c.anchor.x, "t": c.anchor.t},
            "vector": {"dx": dx, "dy": dy, "dt": dt}}


def _center_from_record(r) -> ClusterCenter:
    a, v = r["anchor"], r["vector"]
    return ClusterCenter((v["dx"], v["dy"], v["dt"]), TimestampedPoint.of(a["lon"], a["lat"], a["t"]))


def clusters_document(clusters_by_slot, params=None) -> dict:
    slots = []
    for slot in sorted(clusters_by_slot):
        recs = []
        for c in clusters_by_slot[slot]:
            core_index = c.members.index(c.core)
            recs.append({
                "core": c.core.segment_id,
                "core_index": core_index,
                "hs": c.hs,
                "member_ids": [m.segment_id for m in c.members],
                "members": [_seg_record(m) for m in c.members],
                "center": _center_record(c.center),
            })
        slots.append({"slot": int(slot), "clusters": recs})
    doc = {"format": CLUSTERS_FORMAT, "version": FORMAT_VERSION, "slots": slots}
    if params is not None:
        doc["params"] = {"epsilon": params.epsilon, "min_s": params.min_s,
                         "omega": list(params.omega), "delta_t": params.delta_t, "t0": params.t0,
                         "scores_include_core": params.scores_include_core}
    return doc


def _dump(doc) -> str:
    return json.dumps(doc, indent=1, sort_keys=True, allow_nan=True) + "\n"


def write_clusters(path, clusters_by_slot, params=None):
    Path(path).write_text(_dump(clusters_document(clusters_by_slot, params)))


def _load_doc(source, fmt):
    text, name = _text(source)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", line=exc.lineno, path=name) from None
    if not isinstance(doc, dict) or doc.get("format") != fmt:
        raise FormatError(f"not a {fmt} document", path=name)
    if doc.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported {fmt} version {doc.get('version')!r}", path=name)
    return doc, name


def read_clusters(source) -> tuple[dict[int, list[Cluster]], dict | None]:
    doc, name = _load_doc(source, CLUSTERS_FORMAT)
    out: dict[int, list[Cluster]] = {}
    try:
        for s in doc["slots"]:
            cl = []
            for r in s["clusters"]:
                members = tuple(_seg_from_record(m) for m in r["members"])
                cl.append(Cluster(members, _center_from_record(r["center"]),
                                  members[r["core_index"]], float(r["hs"])))
            out[int(s["slot"])] = cl
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise FormatError(f"malformed cluster record: {exc!r}", path=name) from None
    return out, doc.get("params")


# ---------------------------------------------------------------------------
# Ground truth
# ---------------------------------------------------------------------------

def write_truth(path, truths, delta_t: float, t0: float = 0.0):
    doc = {
        "format": TRUTH_FORMAT, "version": FORMAT_VERSION, "delta_t": delta_t, "t0": t0,
        "vehicles": [
            {"vehicle_id": v.vehicle_id, "service_id": v.service_id,
             "stops": [{"stop_id": s, "lat": y, "lon": x, "t": t} for s, x, y, t in v.stops],
             "positions": [{"slot": k, "t": t, "lat": y, "lon": x} for k, t, x, y in v.positions]}
            for v in truths
        ],
    }
    Path(path).write_text(_dump(doc))


def read_truth(source) -> tuple[list[VehicleTruth], float, float]:
    doc, name = _load_doc(source, TRUTH_FORMAT)
    try:
        truths = [
            VehicleTruth(
                v["vehicle_id"], v["service_id"],
                tuple((s["stop_id"], s["lon"], s["lat"], s["t"]) for s in v["stops"]),
                tuple((int(p["slot"]), p["t"], p["lon"], p["lat"]) for p in v["positions"]),
            )
            for v in doc["vehicles"]
        ]
        return truths, float(doc["delta_t"]), float(doc["t0"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed truth record: {exc!r}", path=name) from None


# ---------------------------------------------------------------------------
# Vehicle states (tracking output)
# ---------------------------------------------------------------------------

VEHICLE_COLUMNS = ["slot", "track_id", "service_id", "rs", "lat", "lon", "t_d", "t_a"]


def write_vehicle_states(path, rows):
    """``rows``: iterables matching :data:`VEHICLE_COLUMNS`; None becomes empty."""
    buf = io.StringIO()
    buf.write(VEHICLES_HEADER + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(VEHICLE_COLUMNS)
    for r in rows:
        w.writerow(["" if v is None else (repr(v) if isinstance(v, float) else v) for v in r])
    Path(path).write_text(buf.getvalue())


def read_vehicle_states(source) -> list[dict]:
    text, name = _text(source)
    lines = text.splitlines()
    if not lines or lines[0].strip() != VEHICLES_HEADER:
        raise FormatError(f"missing header {VEHICLES_HEADER!r}", line=1, path=name)
    out = []
    for row in csv.DictReader(lines[1:]):
        out.append({
            "slot": int(row["slot"]), "track_id": int(row["track_id"]),
            "service_id": row["service_id"] or None,
            "rs": int(row["rs"]) if row["rs"] else None,
            "lat": float(row["lat"]), "lon": float(row["lon"]),
            "t_d": float(row["t_d"]) if row["t_d"] else None,
            "t_a": float(row["t_a"]) if row["t_a"] else None,
        })
    return out


# ---------------------------------------------------------------------------
# Evaluation report
# ---------------------------------------------------------------------------

def report_document(report) -> dict:
    doc = {"format": REPORT_FORMAT, "version": FORMAT_VERSION}
    doc.update(report.to_dict())
    return doc


def format_report(report, fmt: str = "table") -> str:
    if fmt == "json":
        return _dump(report_document(report))
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["slot", "n_clusters", "sse", "tra_xb", "tra_xb_reason", "spatial_error"])
        for s in report.per_slot:
            w.writerow([s.slot, s.n_clusters, repr(s.sse),
                        "" if s.tra_xb is None else repr(s.tra_xb), s.tra_xb_reason or "",
                        "" if s.spatial_error is None else repr(s.spatial_error)])
        return buf.getvalue()
    if fmt != "table":
        raise ValueError(f"unknown report format {fmt!r}")
    lines = [f"{'slot':>6} {'clusters':>8} {'SSE':>12} {'Tra-XB':>12} {'spatial':>12}"]
    for s in report.per_slot:
        xb = f"{s.tra_xb:12.6g}" if s.tra_xb is not None else f"{'undefined':>12}"
        sp = f"{s.spatial_error:12.6g}" if s.spatial_error is not None else f"{'-':>12}"
        lines.append(f"{s.slot:>6} {s.n_clusters:>8} {s.sse:12.6g} {xb} {sp}")
    lines.append("")
    lines.append(f"SSE (mean per slot):        {report.sse:.6g}")
    lines.append("Tra-XB (mean, defined):     "
                 + (f"{report.tra_xb:.6g}" if report.tra_xb is not None else "undefined"))
    lines.append("spatial error (mean):       "
                 + (f"{report.spatial_error:.6g}" if report.spatial_error is not None else "-"))
    lines.append("arrival error s (mean):     "
                 + (f"{report.arrival_error:.6g}" if report.arrival_error is not None else "-"))
    lines.append("temporal error s (mean):    "
                 + (f"{report.temporal_error:.6g}" if report.temporal_error is not None else "-"))
    return "\n".join(lines) + "\n"
