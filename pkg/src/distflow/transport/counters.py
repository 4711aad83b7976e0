"""Thread-safe per-link byte counters and their snapshots."""

import threading
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, Field

from .framing import TAG_METRICS
from .topology import ClusterTopology


class TrafficReport(BaseModel):
    """Snapshot of fabric byte counters.

    Node counters are derived from rank counters, so they always equal the
    sum over the node's ranks. Pair bytes are recorded on the sending side.
    """

    node_of: List[int] = Field(description="Node index of every endpoint rank")
    rank_ingress: List[int]
    rank_egress: List[int]
    pair_bytes: List[List[int]] = Field(description="bytes sent, indexed [src_node][dst_node]")

    @classmethod
    def empty(cls, topology: ClusterTopology) -> "TrafficReport":
        ranks = topology.endpoint_count
        nodes = topology.node_count
        return cls(
            node_of=[topology.node_of(rank) for rank in range(ranks)],
            rank_ingress=[0] * ranks,
            rank_egress=[0] * ranks,
            pair_bytes=[[0] * nodes for _ in range(nodes)],
        )

    @property
    def node_count(self) -> int:
        return len(self.pair_bytes)

    @property
    def node_ingress(self) -> List[int]:
        totals = [0] * self.node_count
        for rank, value in enumerate(self.rank_ingress):
            totals[self.node_of[rank]] += value
        return totals

    @property
    def node_egress(self) -> List[int]:
        totals = [0] * self.node_count
        for rank, value in enumerate(self.rank_egress):
            totals[self.node_of[rank]] += value
        return totals

    @property
    def total_egress(self) -> int:
        return sum(self.rank_egress)

    @property
    def total_ingress(self) -> int:
        return sum(self.rank_ingress)

    @property
    def inter_node_bytes(self) -> int:
        return sum(
            value
            for src, row in enumerate(self.pair_bytes)
            for dst, value in enumerate(row)
            if src != dst
        )

    def merged(self, other: "TrafficReport") -> "TrafficReport":
        """Element-wise sum; used to combine per-process partial counters."""
        return TrafficReport(
            node_of=list(self.node_of),
            rank_ingress=[a + b for a, b in zip(self.rank_ingress, other.rank_ingress)],
            rank_egress=[a + b for a, b in zip(self.rank_egress, other.rank_egress)],
            pair_bytes=[[a + b for a, b in zip(r1, r2)] for r1, r2 in zip(self.pair_bytes, other.pair_bytes)],
        )

    def minus(self, earlier: "TrafficReport") -> "TrafficReport":
        """Counter deltas since an earlier snapshot."""
        return TrafficReport(
            node_of=list(self.node_of),
            rank_ingress=[a - b for a, b in zip(self.rank_ingress, earlier.rank_ingress)],
            rank_egress=[a - b for a, b in zip(self.rank_egress, earlier.rank_egress)],
            pair_bytes=[[a - b for a, b in zip(r1, r2)] for r1, r2 in zip(self.pair_bytes, earlier.pair_bytes)],
        )


class TrafficCounters:
    """Monotone byte counters safe for concurrent increments and snapshot reads.

    Besides the totals, per-iteration rank totals are kept for every frame
    except metrics frames, so an iteration's data traffic does not depend on
    when the metrics of neighbouring iterations happen to arrive. A slot lives
    until its rank takes it.
    """

    def __init__(self, topology: ClusterTopology):
        self.topology = topology
        self._lock = threading.Lock()
        self._report = TrafficReport.empty(topology)
        self._by_iteration: Dict[int, Dict[int, List[int]]] = {}

    def record_send(
        self, src_rank: int, dst_rank: int, nbytes: int, tag: Optional[int] = None, iteration: int = 0
    ) -> None:
        src_node = self._report.node_of[src_rank]
        dst_node = self._report.node_of[dst_rank]
        with self._lock:
            self._report.rank_egress[src_rank] += nbytes
            self._report.pair_bytes[src_node][dst_node] += nbytes
            if tag != TAG_METRICS:
                self._iteration_slot(iteration, src_rank)[1] += nbytes

    def record_recv(self, dst_rank: int, nbytes: int, tag: Optional[int] = None, iteration: int = 0) -> None:
        with self._lock:
            self._report.rank_ingress[dst_rank] += nbytes
            if tag != TAG_METRICS:
                self._iteration_slot(iteration, dst_rank)[0] += nbytes

    def _iteration_slot(self, iteration: int, rank: int) -> List[int]:
        return self._by_iteration.setdefault(iteration, {}).setdefault(rank, [0, 0])

    def rank_totals(self, rank: int) -> Tuple[int, int]:
        """(ingress, egress) of one rank."""
        with self._lock:
            return self._report.rank_ingress[rank], self._report.rank_egress[rank]

    def iteration_totals(self, rank: int, iteration: int) -> Tuple[int, int]:
        """(ingress, egress) of one rank for one iteration, metrics frames excluded."""
        with self._lock:
            ingress, egress = self._by_iteration.get(iteration, {}).get(rank, (0, 0))
            return ingress, egress

    def take_iteration(self, rank: int, iteration: int) -> Tuple[int, int]:
        """Like iteration_totals, then forget the slot; call once the rank is done with the iteration."""
        with self._lock:
            slots = self._by_iteration.get(iteration, {})
            ingress, egress = slots.pop(rank, (0, 0))
            if not slots:
                self._by_iteration.pop(iteration, None)
            return ingress, egress

    def snapshot(self) -> TrafficReport:
        with self._lock:
            return self._report.model_copy(deep=True)

    def reset(self) -> None:
        with self._lock:
            self._report = TrafficReport.empty(self.topology)
            self._by_iteration = {}
