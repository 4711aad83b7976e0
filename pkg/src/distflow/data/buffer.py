"""Distributed Databuffer: one store per node, fast-path passthrough or all-to-all resharding."""

import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

from pydantic import BaseModel

from ..config import get_config
from ..console import log
from ..errors import IndivisibleError, NotReady, StaleIteration, UnknownStage
from ..transport.collectives import all_to_all, stage_tag
from ..transport.fabric import Fabric
from ..transport.framing import counted_size
from ..transport.topology import ClusterTopology
from .codec import decode_records, encode_records
from .models import ParallelLayout, SampleBatch, SampleRecord

_SlotKey = Tuple[str, int]


class PutAck(BaseModel):
    """Result of a put: whether records were kept and how many the slot now holds."""

    accepted: bool
    held: int


@dataclass
class _View:
    """One redistribution of a slot towards a destination dp_size."""

    done: threading.Event = field(default_factory=threading.Event)
    holdings: Optional[List[SampleRecord]] = None
    error: Optional[BaseException] = None


@dataclass
class _Slot:
    puts: Dict[int, List[SampleRecord]] = field(default_factory=dict)
    views: Dict[int, _View] = field(default_factory=dict)


class BufferStore:
    """Node-local databuffer for every stage output of the workers on one node.

    Only TP rank 0 of each local DP group contributes records; a stage is
    collected once every local group has put. Redistribution towards a
    destination layout runs once per (stage, iteration, dp_size): the first
    getter performs it, later getters wait for the cached result.
    """

    def __init__(
        self,
        node_index: int,
        topology: ClusterTopology,
        layouts: Mapping[str, ParallelLayout],
        fabric: Optional[Fabric] = None,
        timeout: Optional[float] = None,
    ):
        if not 0 <= node_index < topology.num_nodes:
            raise ValueError(f"Node {node_index} outside topology with {topology.num_nodes} nodes")
        self.node_index = node_index
        self.topology = topology
        self.layouts: Dict[str, ParallelLayout] = dict(layouts)
        self.fabric = fabric
        self.timeout = get_config().recv_timeout_s if timeout is None else timeout
        self.current_iteration = 0
        self.suppressed_puts = 0
        self.redistribution_bytes: Dict[_SlotKey, int] = {}
        self._slots: Dict[_SlotKey, _Slot] = {}
        self._finished: Dict[int, set] = {}
        self._cond = threading.Condition()
        self._aborted: Optional[str] = None

    @property
    def leader_rank(self) -> int:
        return self.topology.node_leader(self.node_index)

    def layout_of(self, stage_id: str) -> ParallelLayout:
        try:
            return self.layouts[stage_id]
        except KeyError:
            raise UnknownStage(f"Stage '{stage_id}' has no layout in the store of node {self.node_index}") from None

    # Puts

    def put(
        self,
        stage_id: str,
        iteration: int,
        dp_rank: int,
        tp_rank: int,
        batch: SampleBatch,
    ) -> PutAck:
        """Store a DP group's stage output; puts from tp_rank != 0 are accepted and discarded.

        Raises:
            StaleIteration: the store already retired this iteration.
            UnknownStage: the stage has no registered layout.
        """
        layout = self.layout_of(stage_id)
        if dp_rank not in layout.local_dp_ranks(self.topology, self.node_index):
            raise ValueError(f"DP group {dp_rank} of stage '{stage_id}' is not local to node {self.node_index}")
        with self._cond:
            self._check_alive()
            if iteration < self.current_iteration:
                raise StaleIteration(
                    f"Put for iteration {iteration} but node {self.node_index} is at {self.current_iteration}"
                )
            slot = self._slots.setdefault((stage_id, iteration), _Slot())
            if tp_rank != 0:
                self.suppressed_puts += 1
                return PutAck(accepted=False, held=self._held(slot))
            if dp_rank in slot.puts:
                raise ValueError(f"DP group {dp_rank} already put stage '{stage_id}' iteration {iteration}")
            slot.puts[dp_rank] = list(batch.records)
            self._cond.notify_all()
            return PutAck(accepted=True, held=self._held(slot))

    def is_collected(self, stage_id: str, iteration: int) -> bool:
        layout = self.layout_of(stage_id)
        with self._cond:
            slot = self._slots.get((stage_id, iteration))
            return slot is not None and len(slot.puts) == layout.groups_per_node(self.topology)

    def holdings(self, stage_id: str, iteration: int) -> List[SampleRecord]:
        """Collected records ordered by source dp_rank, then local position."""
        with self._cond:
            slot = self._slots.get((stage_id, iteration))
            if slot is None:
                return []
            return [record for dp_rank in sorted(slot.puts) for record in slot.puts[dp_rank]]

    # Redistribution

    def redistribute(
        self,
        stage_id: str,
        iteration: int,
        to_layout: ParallelLayout,
        timeout: Optional[float] = None,
    ) -> List[SampleRecord]:
        """This store's holdings for a destination layout, computing them on first call.

        Raises:
            NotReady: collection did not complete within the timeout, or the store was aborted.
            IndivisibleError: the node count does not divide the held records, or d_B does not divide G.
        """
        from_layout = self.layout_of(stage_id)
        key = (stage_id, iteration)
        with self._cond:
            self._check_alive()
            if iteration < self.current_iteration:
                raise StaleIteration(f"Iteration {iteration} already retired on node {self.node_index}")
            slot = self._slots.setdefault(key, _Slot())
            view = slot.views.get(to_layout.dp_size)
            owner = view is None
            if owner:
                view = _View()
                slot.views[to_layout.dp_size] = view

        if not owner:
            return self._await_view(view, stage_id, iteration, timeout)

        try:
            self._await_collection(stage_id, iteration, from_layout, timeout)
            holdings = self.holdings(stage_id, iteration)
            view.holdings = self._reshard(stage_id, iteration, holdings, from_layout, to_layout)
        except NotReady as e:
            with self._cond:
                slot.views.pop(to_layout.dp_size, None)
            view.error = e
            raise
        except BaseException as e:
            view.error = e
            raise
        finally:
            view.done.set()
        return view.holdings

    def _reshard(
        self,
        stage_id: str,
        iteration: int,
        holdings: List[SampleRecord],
        from_layout: ParallelLayout,
        to_layout: ParallelLayout,
    ) -> List[SampleRecord]:
        num_stores = self.topology.num_nodes
        global_batch = len(holdings) * num_stores
        if global_batch % to_layout.dp_size != 0:
            raise IndivisibleError(global_batch, to_layout.dp_size, what="global batch")
        if to_layout.dp_size == from_layout.dp_size:
            return holdings
        if len(holdings) % num_stores != 0:
            raise IndivisibleError(len(holdings), num_stores, what="per-store record count")
        if self.fabric is None:
            raise RuntimeError(f"Store of node {self.node_index} has no fabric for redistribution")

        part = len(holdings) // num_stores
        outgoing = [encode_records(holdings[i * part:(i + 1) * part]) for i in range(num_stores)]
        participants = [self.topology.node_leader(node) for node in range(num_stores)]
        wire = sum(
            counted_size(len(payload), self.fabric.max_frame_size)
            for index, payload in enumerate(outgoing)
            if index != self.node_index
        )
        received = all_to_all(
            self.fabric,
            self.leader_rank,
            participants,
            outgoing,
            stage_tag("redistribute", stage_id, to_layout.dp_size),
            iteration,
        )
        with self._cond:
            key = (stage_id, iteration)
            self.redistribution_bytes[key] = self.redistribution_bytes.get(key, 0) + wire
        log(
            "store",
            f"node {self.node_index} resharded '{stage_id}' it {iteration}: "
            f"d {from_layout.dp_size} -> {to_layout.dp_size}, {wire} bytes out",
            level="DEBUG",
        )
        return [record for payload in received for record in decode_records(payload)]

    def _await_collection(
        self, stage_id: str, iteration: int, layout: ParallelLayout, timeout: Optional[float]
    ) -> None:
        expected = layout.groups_per_node(self.topology)
        limit = self.timeout if timeout is None else timeout
        deadline = time.monotonic() + limit
        with self._cond:
            while True:
                self._check_alive()
                slot = self._slots[(stage_id, iteration)]
                if len(slot.puts) == expected:
                    return
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise NotReady(
                        f"Stage '{stage_id}' iteration {iteration} on node {self.node_index}: "
                        f"{len(slot.puts)} of {expected} groups collected"
                    )
                self._cond.wait(remaining)

    def _await_view(self, view: _View, stage_id: str, iteration: int, timeout: Optional[float]) -> List[SampleRecord]:
        limit = self.timeout if timeout is None else timeout
        deadline = time.monotonic() + limit
        while not view.done.wait(min(0.1, max(0.0, deadline - time.monotonic()))):
            with self._cond:
                self._check_alive()
            if time.monotonic() >= deadline:
                raise NotReady(f"Redistribution of '{stage_id}' iteration {iteration} still pending")
        if view.error is not None:
            raise view.error
        return view.holdings

    # Gets

    def get(
        self,
        stage_id: str,
        iteration: int,
        dest_dp_rank: int,
        to_layout: ParallelLayout,
        timeout: Optional[float] = None,
    ) -> SampleBatch:
        """The contiguous slice of this store's holdings for one local destination DP group.

        Raises:
            UnknownStage: the stage has no registered layout.
            NotReady: redistribution did not finish within the timeout.
        """
        self.layout_of(stage_id)
        local_groups = to_layout.local_dp_ranks(self.topology, self.node_index)
        if dest_dp_rank not in local_groups:
            raise ValueError(f"DP group {dest_dp_rank} is not local to node {self.node_index}")
        holdings = self.redistribute(stage_id, iteration, to_layout, timeout=timeout)
        per_group = len(holdings) // len(local_groups)
        start = (dest_dp_rank - local_groups[0]) * per_group
        return SampleBatch(records=holdings[start:start + per_group], stage_id=stage_id, iteration=iteration)

    # Lifecycle

    def complete_iteration(self, rank: int, iteration: int) -> None:
        """Mark a local worker done; once all are, drop the iteration's data and advance."""
        if self.topology.node_of(rank) != self.node_index:
            raise ValueError(f"Rank {rank} is not on node {self.node_index}")
        with self._cond:
            done = self._finished.setdefault(iteration, set())
            done.add(rank)
            if len(done) < self.topology.workers_per_node:
                return
            del self._finished[iteration]
            for key in [key for key in self._slots if key[1] <= iteration]:
                del self._slots[key]
            self.current_iteration = max(self.current_iteration, iteration + 1)
            self._cond.notify_all()

    def abort(self, reason: str) -> None:
        """Fail every pending and future call on this store."""
        with self._cond:
            if self._aborted is None:
                self._aborted = reason
            self._cond.notify_all()

    def _check_alive(self) -> None:
        if self._aborted is not None:
            raise NotReady(f"Store of node {self.node_index} aborted: {self._aborted}")

    @staticmethod
    def _held(slot: _Slot) -> int:
        return sum(len(records) for records in slot.puts.values())


def create_stores(
    topology: ClusterTopology,
    layouts: Mapping[str, ParallelLayout],
    fabric: Optional[Fabric] = None,
    nodes: Optional[Sequence[int]] = None,
    timeout: Optional[float] = None,
) -> Dict[int, BufferStore]:
    """One store per node (or per listed node when a process hosts only some)."""
    indices = range(topology.num_nodes) if nodes is None else nodes
    return {node: BufferStore(node, topology, layouts, fabric=fabric, timeout=timeout) for node in indices}


def redistribute(
    stores: Sequence[BufferStore],
    stage_id: str,
    iteration: int,
    to_layout: ParallelLayout,
    timeout: Optional[float] = None,
) -> List[List[SampleRecord]]:
    """Run one stage transition on every store concurrently; returns holdings per store."""
    with ThreadPoolExecutor(max_workers=max(1, len(stores))) as executor:
        futures = [
            executor.submit(store.redistribute, stage_id, iteration, to_layout, timeout)
            for store in stores
        ]
        return [future.result() for future in futures]
