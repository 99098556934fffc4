"""Homogeneity-guided density clustering of trajectory segments.

Within one time slot every segment with at least ``min_s`` segments in its
epsilon-neighborhood is a core segment. Each core is scored by a weighted
sum of following, speed and direction scores (lower is more homogeneous).
A core seeds a cluster when it has the lowest score among the cores in its
own neighborhood; the cluster is that neighborhood, and its center is the
mean member displacement.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyClusterError
from .geometry import (
    TimestampedPoint,
    TrajectorySegment,
    direction,
    direction_values,
    following_degree,
    following_degree_values,
    segment_distance,
    segment_distance_arrays,
    speed,
)
from .model import Cluster, ClusterCenter, SensorTrajectory, all_segments, slot_partition

# Pairs whose segment distance is <= eps always have an endpoint pair within
# sqrt(5) * eps; 3 * eps leaves room for rounding.
_INDEX_RADIUS_FACTOR = 3.0
_BRUTE_CHUNK = 2_000_000


@dataclass(frozen=True)
class ClusteringParams:
    epsilon: float = 0.002
    min_s: int = 17
    omega: tuple[float, float, float] = (1.0, 1.0, 1.0)
    delta_t: float = 30.0
    t0: float = 0.0
    # speed/direction statistics range over the core as well as its neighbors
    scores_include_core: bool = True

    def __post_init__(self):
        object.__setattr__(self, "omega", tuple(float(w) for w in self.omega))
        if not (math.isfinite(self.epsilon) and self.epsilon >= 0):
            raise ValueError(f"epsilon must be >= 0, got {self.epsilon}")
        if int(self.min_s) != self.min_s or self.min_s < 1:
            raise ValueError(f"min_s must be an integer >= 1, got {self.min_s}")
        if len(self.omega) != 3 or any(not (w >= 0) for w in self.omega):
            raise ValueError(f"omega must be three non-negative weights, got {self.omega}")
        if not self.delta_t > 0:
            raise ValueError(f"delta_t must be positive, got {self.delta_t}")


# ---------------------------------------------------------------------------
# Scalar definitions. These are the reference forms; cluster_slot uses the
# vectorized equivalents below.
# ---------------------------------------------------------------------------

def epsilon_neighborhood(ts: TrajectorySegment, slot: Sequence[TrajectorySegment], eps: float):
    """Segments of ``slot`` within distance ``eps`` of ``ts`` (``ts`` included)."""
    out = [other for other in slot if other is ts or segment_distance(ts, other) <= eps]
    if not any(o is ts for o in out):
        out.insert(0, ts)
    return out


def is_core(ts: TrajectorySegment, slot: Sequence[TrajectorySegment], params: ClusteringParams) -> bool:
    if ts.is_degenerate:
        return False
    return len(epsilon_neighborhood(ts, slot, params.epsilon)) >= params.min_s


def _others(core, nbhd):
    return [ts for ts in nbhd if ts is not core]


def following_score(core: TrajectorySegment, nbhd: Sequence[TrajectorySegment]) -> float:
    """``|nbhd|`` minus the summed following degree of the core's neighbors."""
    return len(nbhd) - sum(following_degree(core, ts) for ts in _others(core, nbhd))


def _spread_score(value, values):
    if not values:
        return 0.0
    hi, lo = max(values), min(values)
    if hi == lo:
        return 0.0
    return abs(value - sum(values) / len(values)) / (hi - lo)


def speed_score(core, nbhd, include_core: bool = True) -> float:
    members = nbhd if include_core else _others(core, nbhd)
    return _spread_score(speed(core), [speed(ts) for ts in members])


def _unwrap(angle, ref):
    return ref + ((angle - ref + 180.0) % 360.0 - 180.0)


def direction_score(core, nbhd, include_core: bool = True) -> float:
    """Direction spread score; angles are unwrapped onto the core's branch.

    Zero-length members have no direction and are skipped.
    """
    if core.is_degenerate:
        return 0.0
    ref = direction(core)
    members = nbhd if include_core else _others(core, nbhd)
    dirs = [_unwrap(direction(ts), ref) for ts in members if not ts.is_degenerate]
    return _spread_score(ref, dirs)


def homogeneity_score(core, nbhd, omega=(1.0, 1.0, 1.0), include_core: bool = True) -> float:
    w1, w2, w3 = omega
    return (w1 * following_score(core, nbhd)
            + w2 * speed_score(core, nbhd, include_core)
            + w3 * direction_score(core, nbhd, include_core))


def cluster_center(members: Iterable[TrajectorySegment]) -> ClusterCenter:
    """Mean displacement vector anchored at the mean start point and time."""
    members = list(members)
    if not members:
        raise EmptyClusterError("cannot compute the center of an empty cluster")
    a = np.array([(m.start.x, m.start.y, m.start.t, m.dx, m.dy, m.dt) for m in members])
    sx, sy, st, dx, dy, dt = a.mean(axis=0)
    return ClusterCenter((float(dx), float(dy), float(dt)), TimestampedPoint.of(sx, sy, st))


# ---------------------------------------------------------------------------
# Neighborhoods
# ---------------------------------------------------------------------------

def _coords(segments: Sequence[TrajectorySegment]) -> np.ndarray:
    return np.array([s.coords() for s in segments], dtype=float).reshape(-1, 4)


def _candidate_pairs_index(coords: np.ndarray, eps: float):
    n = len(coords)
    pts = np.concatenate([coords[:, :2], coords[:, 2:]])
    tree = cKDTree(pts)
    r = _INDEX_RADIUS_FACTOR * eps * (1 + 1e-9) + 1e-12
    pairs = tree.query_pairs(r, output_type="ndarray")
    i = pairs[:, 0] % n
    j = pairs[:, 1] % n
    keep = i != j
    lo = np.minimum(i[keep], j[keep]).astype(np.int64)
    hi = np.maximum(i[keep], j[keep]).astype(np.int64)
    key = np.unique(lo * n + hi)
    return key // n, key % n


def _pairs_within(coords: np.ndarray, eps: float, method: str):
    n = len(coords)
    if method == "index":
        i, j = _candidate_pairs_index(coords, eps)
        d = segment_distance_arrays(coords[i], coords[j])
        keep = d <= eps
        return i[keep], j[keep]
    if method != "brute":
        raise ValueError(f"unknown neighborhood method {method!r}")
    out_i, out_j = [], []
    iu, ju = np.triu_indices(n, k=1)
    for s in range(0, len(iu), _BRUTE_CHUNK):
        i, j = iu[s:s + _BRUTE_CHUNK], ju[s:s + _BRUTE_CHUNK]
        d = segment_distance_arrays(coords[i], coords[j])
        keep = d <= eps
        out_i.append(i[keep])
        out_j.append(j[keep])
    if not out_i:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    return np.concatenate(out_i).astype(np.int64), np.concatenate(out_j).astype(np.int64)


def neighborhood_graph(coords: np.ndarray, eps: float, method: str = "index"):
    """Neighborhoods of all rows as CSR ``(indptr, indices)``, self included.

    ``method="brute"`` evaluates every pair; ``"index"`` prunes candidates
    with a KD-tree over segment endpoints. Both return identical results.
    """
    n = len(coords)
    i, j = _pairs_within(coords, eps, method)
    diag = np.arange(n, dtype=np.int64)
    rows = np.concatenate([i, j, diag])
    cols = np.concatenate([j, i, diag])
    order = np.lexsort((cols, rows))
    rows, cols = rows[order], cols[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n), out=indptr[1:])
    return indptr, cols


def neighborhoods(segments: Sequence[TrajectorySegment], eps: float, method: str = "index"):
    """List of sorted index arrays, one epsilon-neighborhood per segment."""
    indptr, cols = neighborhood_graph(_coords(segments), eps, method)
    return [cols[indptr[k]:indptr[k + 1]] for k in range(len(segments))]


# ---------------------------------------------------------------------------
# Vectorized scoring and cluster formation
# ---------------------------------------------------------------------------

def _masked_stats(values, mask, rows, indptr, n):
    """Per-row count, mean, max and min of ``values`` where ``mask``."""
    cnt = np.bincount(rows, weights=mask.astype(float), minlength=n)
    tot = np.bincount(rows, weights=np.where(mask, values, 0.0), minlength=n)
    starts = indptr[:-1]
    hi = np.maximum.reduceat(np.where(mask, values, -np.inf), starts)
    lo = np.minimum.reduceat(np.where(mask, values, np.inf), starts)
    with np.errstate(divide="ignore", invalid="ignore"):
        mean = tot / cnt
    return cnt, mean, hi, lo


def _spread(value, cnt, mean, hi, lo):
    span = hi - lo
    ok = (cnt > 0) & (span > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(ok, np.abs(value - mean) / span, 0.0)


def _scores(arr: np.ndarray, indptr, cols, include_core: bool):
    """FS, SS, DS for every row of the slot (rows are segments)."""
    n = len(arr)
    sizes = np.diff(indptr)
    rows = np.repeat(np.arange(n), sizes)
    sx, sy, st, ex, ey, et = arr.T
    dx, dy = ex - sx, ey - sy
    degenerate = (dx == 0) & (dy == 0)
    not_self = cols != rows

    d1 = np.hypot(sx[rows] - sx[cols], sy[rows] - sy[cols])
    d2 = np.hypot(ex[rows] - ex[cols], ey[rows] - ey[cols])
    fd = np.where(not_self, following_degree_values(d1, d2), 0.0)
    fs = sizes - np.bincount(rows, weights=fd, minlength=n)

    member = np.ones_like(not_self) if include_core else not_self
    sp = np.hypot(dx, dy) / (et - st)
    ss = _spread(sp, *_masked_stats(sp[cols], member, rows, indptr, n))

    dr = direction_values(dx, dy)
    ref = dr[rows]
    unwrapped = ref + ((dr[cols] - ref + 180.0) % 360.0 - 180.0)
    dmask = member & ~degenerate[cols]
    ds = _spread(dr, *_masked_stats(unwrapped, dmask, rows, indptr, n))
    ds = np.where(degenerate, 0.0, ds)
    return fs, ss, ds


def _canonical(segments: Iterable[TrajectorySegment]) -> list[TrajectorySegment]:
    return sorted(segments, key=lambda s: s.key)


def cluster_slot(slot: Sequence[TrajectorySegment], params: ClusteringParams,
                 method: str = "index") -> list[Cluster]:
    """Cluster the segments of one time slot.

    Output is independent of input order: segments are first sorted by
    (sensor id, start time, geometry), and score ties between neighboring
    cores go to the larger neighborhood, then to the canonically first core.
    """
    segs = _canonical(slot)
    n = len(segs)
    if n == 0:
        return []
    arr = np.array([(s.start.x, s.start.y, s.start.t, s.end.x, s.end.y, s.end.t) for s in segs])
    coords = arr[:, [0, 1, 3, 4]]
    indptr, cols = neighborhood_graph(coords, params.epsilon, method)
    sizes = np.diff(indptr)
    degenerate = (coords[:, 0] == coords[:, 2]) & (coords[:, 1] == coords[:, 3])
    core = (sizes >= params.min_s) & ~degenerate
    if not core.any():
        return []

    fs, ss, ds = _scores(arr, indptr, cols, params.scores_include_core)
    w1, w2, w3 = params.omega
    hs = w1 * fs + w2 * ss + w3 * ds

    idx = np.arange(n)
    order = np.lexsort((idx, -sizes, hs))
    rank = np.empty(n, dtype=float)
    rank[order] = np.arange(n)
    rank[~core] = np.inf
    best = np.minimum.reduceat(rank[cols], indptr[:-1])
    seeds = np.flatnonzero(core & (best == rank))

    clusters = []
    for c in seeds:
        members = tuple(segs[k] for k in cols[indptr[c]:indptr[c + 1]])
        clusters.append(Cluster(members, cluster_center(members), segs[c], float(hs[c])))
    return clusters


def core_scores(slot: Sequence[TrajectorySegment], params: ClusteringParams, method: str = "index"):
    """Map from segment to homogeneity score for every core segment of a slot."""
    segs = _canonical(slot)
    if not segs:
        return {}
    arr = np.array([(s.start.x, s.start.y, s.start.t, s.end.x, s.end.y, s.end.t) for s in segs])
    indptr, cols = neighborhood_graph(arr[:, [0, 1, 3, 4]], params.epsilon, method)
    sizes = np.diff(indptr)
    fs, ss, ds = _scores(arr, indptr, cols, params.scores_include_core)
    w1, w2, w3 = params.omega
    hs = w1 * fs + w2 * ss + w3 * ds
    return {s: float(hs[k]) for k, s in enumerate(segs)
            if sizes[k] >= params.min_s and not s.is_degenerate}


def run(dataset: Sequence[SensorTrajectory], params: ClusteringParams,
        workers: int = 1) -> dict[int, list[Cluster]]:
    """Segment, slot and cluster a whole dataset; returns clusters per slot."""
    slots = slot_partition(all_segments(dataset), params.delta_t, params.t0)
    keys = list(slots)
    if workers > 1 and len(keys) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda k: cluster_slot(slots[k], params), keys))
    else:
        results = [cluster_slot(slots[k], params) for k in keys]
    return dict(zip(keys, results))
