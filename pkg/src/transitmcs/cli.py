"""Command-line pipeline: generate -> filter -> cluster -> track -> evaluate."""
from __future__ import annotations

import argparse
import sys
from collections import Counter
from pathlib import Path

from . import io as fmt
from .clustering import ClusteringParams, run
from .errors import TransitMCSError
from .metrics import evaluate
from .model import all_segments
from .simgen import (
    DEFAULT_JITTER_DEG,
    SimulationConfig,
    load_schedule,
    prefilter,
    simulate,
    synthetic_network,
)
from .tracking import Tracker, TrackingConfig


def _weights(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected three comma-separated weights w1,w2,w3")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric weight in {text!r}") from None


def infer_ping_interval(trajectories, default: float = 30.0) -> float:
    """Most common gap between consecutive pings (smallest on ties)."""
    gaps = Counter()
    for tr in trajectories:
        for a, b in zip(tr.points, tr.points[1:]):
            gaps[round(b.t - a.t, 9)] += 1
    if not gaps:
        return default
    top = max(gaps.values())
    return min(g for g, n in gaps.items() if n == top)


def _sim_args(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sensors-per-segment", type=int, default=40)
    p.add_argument("--noise-fraction", type=float, default=0.0)
    p.add_argument("--jitter", type=float, default=DEFAULT_JITTER_DEG,
                   help="position noise std-dev in coordinate units")
    p.add_argument("--ping-interval", type=float, default=10.0)
    p.add_argument("--geolocation-mode", choices=["sensors", "pings"], default="sensors")


def _cluster_args(p):
    p.add_argument("--epsilon", type=float, default=0.002)
    p.add_argument("--min-s", type=int, default=17)
    p.add_argument("--weights", type=_weights, default=(1.0, 1.0, 1.0))
    p.add_argument("--delta-t", type=float, default=None,
                   help="slot width in seconds (default: the dataset's ping interval)")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--exclude-core-in-scores", action="store_true",
                   help="leave the core out of the speed/direction statistics")


def _filter_args(p):
    p.add_argument("--radius-m", type=float, default=10.0)
    p.add_argument("--filter-mode", choices=["sensor", "ping"], default="sensor")


def _track_args(p):
    p.add_argument("--assign-gate", type=float, default=TrackingConfig.assign_gate)
    p.add_argument("--association-gate", type=float, default=TrackingConfig.association_gate)
    p.add_argument("--max-missed", type=int, default=TrackingConfig.max_missed)


def _sim_config(a) -> SimulationConfig:
    return SimulationConfig(
        sensors_per_segment=a.sensors_per_segment, position_jitter=a.jitter,
        ping_interval=a.ping_interval, off_route_sensor_fraction=a.noise_fraction,
        rng_seed=a.seed, geolocation_mode=a.geolocation_mode,
    )


def _params(a, trajectories) -> ClusteringParams:
    delta_t = a.delta_t if a.delta_t is not None else infer_ping_interval(trajectories)
    return ClusteringParams(epsilon=a.epsilon, min_s=a.min_s, omega=a.weights, delta_t=delta_t,
                            t0=a.t0, scores_include_core=not a.exclude_core_in_scores)


def _out(*args):
    print(*args)


def _warn(msg):
    print(f"warning: {msg}", file=sys.stderr)


# ---------------------------------------------------------------------------

def cmd_synth_schedule(a):
    services, trips = synthetic_network(a.services, a.segments, a.journey_s, a.trips, a.headway, seed=a.seed)
    fmt.write_schedule(a.out, services, trips)
    _out(f"services={len(services)} trips={len(trips)}")


def _generate(a, schedule_path, pings_path, truth_path):
    services, trips = load_schedule(schedule_path)
    cfg = _sim_config(a)
    delta_t = a.delta_t if a.delta_t is not None else cfg.ping_interval
    on_route, noise, truths = simulate(services, trips, cfg, delta_t=delta_t)
    sensors = on_route + noise
    n_pings = fmt.write_pings(pings_path, sensors)
    if truth_path:
        fmt.write_truth(truth_path, truths, delta_t)
    _out(f"services={len(services)} trips={len(trips)} sensors={len(sensors)} "
         f"noise_sensors={len(noise)} pings={n_pings}")
    return services


def cmd_generate(a):
    _generate(a, a.schedule, a.out, a.truth)


def _filter(services, in_path, out_path, radius_m, mode):
    sensors = fmt.read_pings(in_path)
    kept = prefilter(sensors, [s.polyline for s in services], radius_m, mode)
    n = fmt.write_pings(out_path, kept)
    _out(f"sensors_in={len(sensors)} sensors_kept={len(kept)} pings_kept={n}")


def cmd_filter(a):
    services, _ = load_schedule(a.schedule)
    _filter(services, a.pings, a.out, a.radius_m, a.filter_mode)


def _cluster(a, in_path, out_path):
    data = fmt.read_pings(in_path)
    params = _params(a, data)
    result = run(data, params, workers=a.workers)
    fmt.write_clusters(out_path, result, params)
    n = sum(len(v) for v in result.values())
    _out(f"segments={len(all_segments(data))} slots={len(result)} clusters={n} "
         f"epsilon={params.epsilon!r} min_s={params.min_s} delta_t={params.delta_t!r}")
    if n == 0:
        _warn("no clusters found")


def cmd_cluster(a):
    _cluster(a, a.pings, a.out)


def _track(a, clusters_path, services, out_path):
    clusters, _ = fmt.read_clusters(clusters_path)
    tracker = Tracker(services, TrackingConfig(a.assign_gate, a.association_gate, a.max_missed))
    rows = []
    for slot in sorted(clusters):
        for tr in tracker.step(slot, [c.center for c in clusters[slot]]):
            if tr.last_slot != slot:
                continue
            v, loc = tr.vehicle, tr.loc
            rows.append((slot, tr.track_id, v.v_s if v else None, v.rs if v else None,
                         loc.y, loc.x, v.t_d if v else None, v.t_a if v else None))
    fmt.write_vehicle_states(out_path, rows)
    _out(f"tracks={tracker.next_id} vehicle_states={len(rows)}")


def cmd_track(a):
    services, _ = load_schedule(a.schedule)
    _track(a, a.clusters, services, a.out)


def _evaluate(clusters_path, truth_path, out_path, out_format):
    clusters, _ = fmt.read_clusters(clusters_path)
    truths, _, _ = fmt.read_truth(truth_path)
    report = evaluate(clusters, truths)
    text = fmt.format_report(report, out_format)
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)
    return report


def cmd_evaluate(a):
    _evaluate(a.clusters, a.truth, a.out, a.format)


def cmd_run(a):
    d = Path(a.outdir)
    d.mkdir(parents=True, exist_ok=True)
    services = _generate(a, a.schedule, d / "pings_raw.csv", d / "truth.json")
    _filter(services, d / "pings_raw.csv", d / "pings.csv", a.radius_m, a.filter_mode)
    if a.delta_t is None:
        a.delta_t = a.ping_interval
    _cluster(a, d / "pings.csv", d / "clusters.json")
    _track(a, d / "clusters.json", services, d / "vehicles.csv")
    report = _evaluate(d / "clusters.json", d / "truth.json", d / "report.json", "json")
    sys.stdout.write(fmt.format_report(report, a.format))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="transitmcs",
                                     description="Identify transit vehicles from crowdsourced sensor pings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-schedule", help="write a synthetic schedule file")
    p.add_argument("--services", type=int, default=1)
    p.add_argument("--segments", type=int, default=16)
    p.add_argument("--journey-s", type=float, default=540.0)
    p.add_argument("--trips", type=int, default=1)
    p.add_argument("--headway", type=float, default=600.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_schedule)

    p = sub.add_parser("generate", help="simulate sensor pings from a schedule")
    p.add_argument("--schedule", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", help="also write ground-truth vehicle states")
    p.add_argument("--delta-t", type=float, default=None, help="slot width for the truth file")
    _sim_args(p)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("filter", help="drop sensors outside the route buffer")
    p.add_argument("--schedule", required=True)
    p.add_argument("--pings", required=True)
    p.add_argument("--out", required=True)
    _filter_args(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("cluster", help="cluster trajectory segments per time slot")
    p.add_argument("--pings", required=True)
    p.add_argument("--out", required=True)
    _cluster_args(p)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("track", help="map cluster centers to vehicles on services")
    p.add_argument("--clusters", required=True)
    p.add_argument("--schedule", required=True)
    p.add_argument("--out", required=True)
    _track_args(p)
    p.set_defaults(func=cmd_track)

    p = sub.add_parser("evaluate", help="score clusters against ground truth")
    p.add_argument("--clusters", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--out")
    p.add_argument("--format", choices=["table", "json", "csv"], default="table")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("run", help="full pipeline into an output directory")
    p.add_argument("--schedule", required=True)
    p.add_argument("--outdir", required=True)
    p.add_argument("--format", choices=["table", "json", "csv"], default="table")
    _sim_args(p)
    _filter_args(p)
    _cluster_args(p)
    _track_args(p)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except (TransitMCSError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
