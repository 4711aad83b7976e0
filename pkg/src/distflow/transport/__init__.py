"""Message fabric with in-process and TCP backends and byte accounting."""

from .collectives import TAG_LOAD, TAG_METRICS, all_to_all, gather_to, scatter_from, stage_tag
from .counters import TrafficCounters, TrafficReport
from .fabric import Backend, Fabric, create_fabric
from .framing import HEADER_SIZE, Envelope
from .topology import ClusterTopology, parse_scale

__all__ = [
    "HEADER_SIZE",
    "TAG_LOAD",
    "TAG_METRICS",
    "Backend",
    "ClusterTopology",
    "Envelope",
    "Fabric",
    "TrafficCounters",
    "TrafficReport",
    "all_to_all",
    "create_fabric",
    "gather_to",
    "parse_scale",
    "scatter_from",
    "stage_tag",
]
