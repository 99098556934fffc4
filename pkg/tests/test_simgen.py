import io

import numpy as np
import pytest

from transitmcs.geometry import GeoPoint, TimestampedPoint, geodesic_distance, point_segment_distance_m
from transitmcs.model import SensorTrajectory
from transitmcs.simgen import (
    SimulationConfig,
    generate_noise_sensors,
    generate_sensors,
    load_schedule,
    prefilter,
    simulate,
    synthetic_network,
    vehicle_positions,
    vehicle_truth,
)

M_PER_DEG_LAT = geodesic_distance(GeoPoint(0, 0), GeoPoint(0, 1))


def two_stop_schedule():
    lat1 = 40.0 + 600.0 / M_PER_DEG_LAT
    return io.StringIO(
        "# transitmcs-schedule v1\n"
        "service,A\n"
        "stop,A,a0,40.0,-73.0\n"
        f"stop,A,a1,{lat1!r},-73.0\n"
        "trip,A,A-1,0,60\n"
    )


class TestSchedule:
    def test_two_stops(self):
        services, trips = load_schedule(two_stop_schedule())
        (rs,) = services[0].rs
        assert rs.dist == pytest.approx(600.0, rel=1e-9)
        assert rs.att == 60.0
        assert rs.speed == pytest.approx(10.0, rel=1e-9)
        assert trips[0].stop_times == (0.0, 60.0)

    def test_sixteen_segments(self):
        services, trips = synthetic_network()
        assert len(services[0].rs) == 16
        assert trips[0].departure == 0 and trips[0].arrival == 540
        assert sum(r.att for r in services[0].rs) == pytest.approx(540)

    def test_network_deterministic(self):
        assert synthetic_network(3, seed=4) == synthetic_network(3, seed=4)


class TestSensors:
    def test_jitter_free_on_line(self):
        services, trips = load_schedule(two_stop_schedule())
        cfg = SimulationConfig(sensors_per_segment=1, position_jitter=0.0, ping_interval=10.0)
        (tr,) = generate_sensors(trips[0], services[0], cfg)
        rs = services[0].rs[0]
        for p in tr.points:
            assert p.x == rs.n_d.x
            frac = p.t / 60.0
            assert p.y == pytest.approx(rs.n_d.y + frac * (rs.n_a.y - rs.n_d.y), abs=1e-12)

    def test_rider_count(self):
        services, trips = synthetic_network()
        out = generate_sensors(trips[0], services[0], SimulationConfig())
        assert len({tr.sensor_id for tr in out}) == 640

    def test_deterministic(self):
        services, trips = synthetic_network()
        cfg = SimulationConfig(rng_seed=3, position_jitter=1e-4)
        assert generate_sensors(trips[0], services[0], cfg) == generate_sensors(trips[0], services[0], cfg)
        other = generate_sensors(trips[0], services[0], SimulationConfig(rng_seed=4, position_jitter=1e-4))
        assert other != generate_sensors(trips[0], services[0], cfg)

    def test_pings_mode(self):
        services, trips = synthetic_network(n_segments=2)
        out = generate_sensors(trips[0], services[0], SimulationConfig(geolocation_mode="pings"))
        assert len(out) == 2 and all(len(tr) == 40 for tr in out)

    def test_time_window_does_not_change_draws(self):
        services, trips = synthetic_network()
        cfg = SimulationConfig(position_jitter=1e-4)
        full = {tr.sensor_id: tr for tr in generate_sensors(trips[0], services[0], cfg)}
        part = generate_sensors(trips[0], services[0], cfg, time_window=(100, 120))
        assert part
        for tr in part:
            assert all(100 <= p.t <= 120 for p in tr.points)
            assert set(tr.points) <= set(full[tr.sensor_id].points)

    def test_positions_clamped(self):
        services, trips = synthetic_network()
        pos = vehicle_positions(services[0], trips[0], [-50, 0, 540, 900])
        first, last = services[0].polyline[0], services[0].polyline[-1]
        assert tuple(pos[0]) == tuple(pos[1]) == (first.x, first.y)
        assert tuple(pos[2]) == tuple(pos[3]) == (last.x, last.y)


class TestNoise:
    def test_zero_fraction(self):
        assert generate_noise_sensors((0, 0, 1, 1), SimulationConfig(), 640, 0, 100) == []

    def test_count(self):
        cfg = SimulationConfig(off_route_sensor_fraction=0.5)
        assert len(generate_noise_sensors((0, 0, 1, 1), cfg, 640, 0, 100)) == 320

    def test_deterministic_and_bounded(self):
        cfg = SimulationConfig(off_route_sensor_fraction=0.1, noise_step=0.3)
        a = generate_noise_sensors((0, 0, 1, 1), cfg, 100, 0, 300)
        assert a == generate_noise_sensors((0, 0, 1, 1), cfg, 100, 0, 300)
        pts = np.array([(p.x, p.y) for tr in a for p in tr.points])
        assert pts.min() >= 0 and pts.max() <= 1


def _line():
    return [GeoPoint(-73.0, 40.0), GeoPoint(-73.0, 40.01), GeoPoint(-72.99, 40.01)]


def _sensor(sid, pts):
    return SensorTrajectory(sid, [TimestampedPoint.of(x, y, 10.0 * k) for k, (x, y) in enumerate(pts)])


class TestPrefilter:
    def test_on_polyline_kept(self):
        s = _sensor("a", [(-73.0, 40.0), (-73.0, 40.005), (-72.995, 40.01)])
        assert prefilter([s], _line(), 10.0) == [s]

    def test_twenty_meters_off_dropped(self):
        off = 20.0 / M_PER_DEG_LAT
        s = _sensor("a", [(-72.995, 40.01 + off), (-72.994, 40.01 + off)])
        assert point_segment_distance_m(40.01 + off, -72.995, 40.01, -73.0, 40.01, -72.99) == pytest.approx(20, rel=1e-3)
        assert prefilter([s], _line(), 10.0) == []

    def test_ping_mode_trims(self):
        s = _sensor("a", [(-73.0, 40.0), (-73.5, 40.0), (-73.0, 40.002)])
        (out,) = prefilter([s], _line(), 10.0, mode="ping")
        assert [p.t for p in out.points] == [0.0, 20.0]
        assert prefilter([s], _line(), 10.0, mode="sensor") == []

    def test_fleet_with_distant_noise(self):
        services, trips = synthetic_network()
        cfg = SimulationConfig(position_jitter=0.0, off_route_sensor_fraction=0.2)
        poly = services[0].polyline
        # noise confined to a box well away from the route
        far = (max(p.x for p in poly) + 0.05, 41.5, max(p.x for p in poly) + 0.5, 41.9)
        on_route, _, _ = simulate(services, trips, cfg)
        noise = generate_noise_sensors(far, cfg, len(on_route), 0, 540)
        assert noise
        assert prefilter(on_route + noise, poly, 10.0) == on_route

    def test_idempotent(self):
        services, trips = synthetic_network()
        cfg = SimulationConfig(position_jitter=5e-5, off_route_sensor_fraction=0.3)
        on_route, noise, _ = simulate(services, trips, cfg)
        once = prefilter(on_route + noise, services[0].polyline, 10.0)
        assert prefilter(once, services[0].polyline, 10.0) == once

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            prefilter([], _line(), 10.0, mode="cell")


def test_truth_positions():
    services, trips = synthetic_network()
    truth = vehicle_truth(trips[0], services[0], 30.0)
    assert [p[0] for p in truth.positions] == list(range(18))
    assert truth.stops[0][0] == "S000-00" and truth.stops[-1][3] == 540.0
    last = services[0].polyline[-1]
    assert truth.positions[-1][2:] == (last.x, last.y)


@pytest.mark.parametrize("kw", [dict(position_jitter=-1), dict(ping_interval=0),
                                dict(off_route_sensor_fraction=1.5), dict(geolocation_mode="x")])
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SimulationConfig(**kw)
