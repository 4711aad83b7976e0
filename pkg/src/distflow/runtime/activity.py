"""Node enter/exit instrumentation for the single-active-node rule."""

import threading
import time
from contextlib import contextmanager
from typing import Iterator, List, Optional, Tuple

from pydantic import BaseModel


class NodeInterval(BaseModel):
    rank: int
    iteration: int
    node_id: str
    start_ns: int
    end_ns: int

    @property
    def duration_ns(self) -> int:
        return self.end_ns - self.start_ns


class ActivityLog:
    """Per-worker log of node intervals; entering a node while another is active raises."""

    def __init__(self, rank: int):
        self.rank = rank
        self.intervals: List[NodeInterval] = []
        self._active: Optional[Tuple[str, int, int]] = None
        self._lock = threading.Lock()

    @property
    def active_node(self) -> Optional[str]:
        return self._active[0] if self._active else None

    def enter(self, node_id: str, iteration: int) -> None:
        with self._lock:
            if self._active is not None:
                raise RuntimeError(
                    f"Rank {self.rank} entered '{node_id}' while '{self._active[0]}' is still active"
                )
            self._active = (node_id, iteration, time.perf_counter_ns())

    def exit(self, node_id: str) -> NodeInterval:
        with self._lock:
            if self._active is None or self._active[0] != node_id:
                raise RuntimeError(f"Rank {self.rank} exited '{node_id}' which is not active")
            active_id, iteration, start = self._active
            self._active = None
            interval = NodeInterval(
                rank=self.rank,
                iteration=iteration,
                node_id=active_id,
                start_ns=start,
                end_ns=time.perf_counter_ns(),
            )
            self.intervals.append(interval)
            return interval

    @contextmanager
    def active(self, node_id: str, iteration: int) -> Iterator[None]:
        self.enter(node_id, iteration)
        try:
            yield
        finally:
            self.exit(node_id)


def find_overlaps(intervals: List[NodeInterval]) -> List[Tuple[NodeInterval, NodeInterval]]:
    """Pairs of intervals of one rank that overlap in time."""
    overlaps = []
    by_rank = {}
    for interval in intervals:
        by_rank.setdefault(interval.rank, []).append(interval)
    for rank_intervals in by_rank.values():
        ordered = sorted(rank_intervals, key=lambda item: (item.start_ns, item.end_ns))
        for earlier, later in zip(ordered, ordered[1:]):
            if later.start_ns < earlier.end_ns:
                overlaps.append((earlier, later))
    return overlaps
