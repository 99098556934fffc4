"""Identify public-transit vehicles by clustering crowdsourced sensor trajectories."""

from .clustering import ClusteringParams, cluster_center, cluster_slot, run
from .geometry import GeoPoint, TimestampedPoint, TrajectorySegment, segment_distance
from .model import Cluster, ClusterCenter, SensorTrajectory, segmentize, slot_partition

__version__ = "0.1.0"

__all__ = [
    "Cluster",
    "ClusterCenter",
    "ClusteringParams",
    "GeoPoint",
    "SensorTrajectory",
    "TimestampedPoint",
    "TrajectorySegment",
    "cluster_center",
    "cluster_slot",
    "run",
    "segment_distance",
    "segmentize",
    "slot_partition",
]
