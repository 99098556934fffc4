"""Cluster validity indices and vehicle identification errors."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import NoEstimateError, SlotMismatchError
from .geometry import GeoPoint, segment_distance_arrays
from .model import Cluster, ClusterCenter, VehicleTruth


@dataclass(frozen=True)
class Undefined:
    """Marker for an index that cannot be computed; falsy."""

    reason: str

    def __bool__(self):
        return False


def _seg_rows(segments) -> np.ndarray:
    return np.array([s.coords() for s in segments], dtype=float).reshape(-1, 4)


def _center_row(c: ClusterCenter) -> np.ndarray:
    dx, dy, _ = c.vector
    return np.array([[c.anchor.x, c.anchor.y, c.anchor.x + dx, c.anchor.y + dy]])


def sse(clusters: Sequence[Cluster]) -> float:
    """Sum over clusters of the pairwise member distance total over 2|C|."""
    total = 0.0
    for c in clusters:
        n = len(c.members)
        if n < 2:
            continue
        rows = _seg_rows(c.members)
        i, j = np.triu_indices(n, k=1)
        # ordered pairs count both ways; self-pairs are zero
        total += 2.0 * float(segment_distance_arrays(rows[i], rows[j]).sum()) / (2 * n)
    return total


def tra_xb(clusters: Sequence[Cluster]) -> float | Undefined:
    """Member-to-center distance total over the minimum center separation."""
    if len(clusters) < 2:
        return Undefined("fewer than two clusters")
    num = 0.0
    centers = []
    for c in clusters:
        crow = _center_row(c.center)
        centers.append(crow[0])
        rows = _seg_rows(c.members)
        num += float(segment_distance_arrays(rows, np.repeat(crow, len(rows), axis=0)).sum())
    centers = np.array(centers)
    i, j = np.triu_indices(len(centers), k=1)
    sep = float(segment_distance_arrays(centers[i], centers[j]).min())
    if sep == 0.0:
        return Undefined("coincident cluster centers")
    return num / sep


def closest_center(point: GeoPoint, centers: Sequence[ClusterCenter]) -> tuple[int, float]:
    """Index of the center whose end point is nearest ``point``, and that distance."""
    if not centers:
        raise NoEstimateError("no cluster centers to estimate from")
    ends = np.array([(c.end.x, c.end.y) for c in centers])
    d = np.hypot(ends[:, 0] - point.x, ends[:, 1] - point.y)
    k = int(np.argmin(d))
    return k, float(d[k])


def spatial_error(true_node: GeoPoint, centers: Sequence[ClusterCenter]) -> float:
    """Planar distance from ``true_node`` to the closest center end point."""
    return closest_center(true_node, centers)[1]


def temporal_error(true_att: float, estimated_att: float) -> float:
    return true_att - estimated_att


@dataclass
class SlotEvaluation:
    slot: int
    n_clusters: int
    sse: float
    tra_xb: float | None
    tra_xb_reason: str | None
    spatial_error: float | None  # mean over vehicles active in the slot


@dataclass
class StopEvaluation:
    vehicle_id: str
    stop_id: str
    true_arrival: float
    est_arrival: float
    arrival_error: float  # true - estimated
    spatial_error: float
    true_att: float
    est_att: float
    temporal_error: float  # att - estimated att


@dataclass
class EvaluationReport:
    sse: float
    tra_xb: float | None
    spatial_error: float | None
    arrival_error: float | None
    temporal_error: float | None
    per_slot: list[SlotEvaluation] = field(default_factory=list)
    per_stop: list[StopEvaluation] = field(default_factory=list)

    def series(self) -> dict:
        """Plot-ready columns indexed by slot."""
        return {
            "slot": [s.slot for s in self.per_slot],
            "sse": [s.sse for s in self.per_slot],
            "tra_xb": [s.tra_xb for s in self.per_slot],
            "spatial_error": [s.spatial_error for s in self.per_slot],
        }

    def to_dict(self) -> dict:
        return {
            "aggregate": {"sse": self.sse, "tra_xb": self.tra_xb, "spatial_error": self.spatial_error,
                          "arrival_error": self.arrival_error, "temporal_error": self.temporal_error},
            "per_slot": [asdict(s) for s in self.per_slot],
            "per_stop": [asdict(s) for s in self.per_stop],
            "series": self.series(),
        }


def _mean(values):
    values = [v for v in values if v is not None]
    return float(np.mean(values)) if values else None


def evaluate(clusters_by_slot: Mapping[int, Sequence[Cluster]],
             truths: Sequence[VehicleTruth] = ()) -> EvaluationReport:
    """Per-slot indices plus spatial and temporal errors against ground truth.

    In each slot every true vehicle is matched to the center whose end point
    is nearest its true end-of-slot position. For each arrival stop the
    estimate is the matched center ending closest to the stop; its end time
    is the estimated arrival.
    """
    truth_slots = {p[0] for v in truths for p in v.positions}
    missing = truth_slots - set(clusters_by_slot)
    if missing:
        raise SlotMismatchError(missing)

    per_slot_err: dict[int, list[float]] = {}
    matched: dict[str, list[ClusterCenter]] = {}
    for v in truths:
        mine = matched.setdefault(v.vehicle_id, [])
        for slot, _t, x, y in v.positions:
            centers = [c.center for c in clusters_by_slot[slot]]
            if not centers:
                continue
            k, d = closest_center(GeoPoint(x, y), centers)
            mine.append(centers[k])
            per_slot_err.setdefault(slot, []).append(d)

    per_slot = []
    for slot in sorted(clusters_by_slot):
        cl = clusters_by_slot[slot]
        xb = tra_xb(cl)
        per_slot.append(SlotEvaluation(
            slot, len(cl), sse(cl),
            None if isinstance(xb, Undefined) else xb,
            xb.reason if isinstance(xb, Undefined) else None,
            _mean(per_slot_err.get(slot, [])),
        ))

    per_stop = []
    for v in truths:
        cands = matched.get(v.vehicle_id, [])
        if not cands:
            continue
        prev_true = v.stops[0][3]
        prev_est = prev_true
        for stop_id, x, y, t_true in v.stops[1:]:
            k, d = closest_center(GeoPoint(x, y), cands)
            t_est = cands[k].end.t
            att, est_att = t_true - prev_true, t_est - prev_est
            per_stop.append(StopEvaluation(v.vehicle_id, stop_id, t_true, t_est,
                                           temporal_error(t_true, t_est), d, att, est_att,
                                           temporal_error(att, est_att)))
            prev_true, prev_est = t_true, t_est

    return EvaluationReport(
        sse=_mean([s.sse for s in per_slot]) or 0.0,
        tra_xb=_mean([s.tra_xb for s in per_slot]),
        spatial_error=_mean([s.spatial_error for s in per_slot]),
        arrival_error=_mean([s.arrival_error for s in per_stop]),
        temporal_error=_mean([s.temporal_error for s in per_stop]),
        per_slot=per_slot,
        per_stop=per_stop,
    )


def purity(clusters: Sequence[Cluster], label_of) -> float:
    """Share of cluster members carrying their cluster's majority label.

    ``label_of`` maps a segment to its ground-truth label (None for noise,
    which never counts as pure).
    """
    good = total = 0
    for c in clusters:
        labels = [label_of(m) for m in c.members]
        counts: dict = {}
        for lab in labels:
            if lab is not None:
                counts[lab] = counts.get(lab, 0) + 1
        good += max(counts.values()) if counts else 0
        total += len(labels)
    return good / total if total else math.nan
