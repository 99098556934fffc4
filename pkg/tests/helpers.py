import math

import numpy as np

from transitmcs.geometry import TrajectorySegment
from transitmcs.model import Cluster
from transitmcs.simgen import SimulationConfig, prefilter, simulate, synthetic_network, vehicle_positions


def seg(x0, y0, x1, y1, t0=0.0, t1=1.0, sid="s"):
    return TrajectorySegment.of(sid, x0, y0, t0, x1, y1, t1)


def polar(angle_deg, length=1.0, sid="s", t1=1.0, x0=0.0, y0=0.0):
    a = math.radians(angle_deg)
    return seg(x0, y0, x0 + length * math.cos(a), y0 + length * math.sin(a), 0.0, t1, sid)


def random_segments(rng, n, box=1.0, max_len=0.3):
    out = []
    starts = rng.uniform(0, box, (n, 2))
    ang = rng.uniform(0, 2 * math.pi, n)
    lens = rng.uniform(0, max_len, n)
    for k in range(n):
        x, y = starts[k]
        out.append(seg(x, y, x + lens[k] * math.cos(ang[k]), y + lens[k] * math.sin(ang[k]),
                       0.0, 1.0, f"r{k:05d}"))
    return out


def bus_label(segment):
    """Trip id of a simulated rider, None for noise walkers."""
    sid = str(segment.sensor_id)
    return None if sid.startswith("noise") else sid.split(":")[0]


def two_bus_fixture(jitter=0.0, noise_fraction=0.0, ping=10.0, seed=11, radius_m=10.0):
    """Two buses on disjoint single-leg routes, 20 riders each, 30 slots."""
    services, trips = synthetic_network(2, n_segments=1, journey_s=30 * ping, seed=5)
    cfg = SimulationConfig(sensors_per_segment=20, position_jitter=jitter, ping_interval=ping,
                           off_route_sensor_fraction=noise_fraction, rng_seed=seed)
    on_route, noise, truths = simulate(services, trips, cfg)
    sensors = on_route + noise
    if noise_fraction > 0:
        sensors = prefilter(sensors, [s.polyline for s in services], radius_m)
    return services, trips, sensors, noise, truths


def true_position(services, trips, trip_id, t):
    trip = next(tr for tr in trips if tr.trip_id == trip_id)
    svc = next(s for s in services if s.js_id == trip.service_id)
    return vehicle_positions(svc, trip, [t])[0]


def random_partition_sse(clusters, rng, sse):
    """SSE after shuffling members among clusters, keeping cluster sizes."""
    members = [m for c in clusters for m in c.members]
    perm = rng.permutation(len(members))
    out, pos = [], 0
    for c in clusters:
        ms = tuple(members[k] for k in perm[pos:pos + len(c.members)])
        pos += len(c.members)
        out.append(Cluster(ms, c.center, ms[0]))
    return sse(out)
