"""Single-controller dataflow: every stage transition is routed through one controller rank."""

from typing import Dict, List, Mapping, Optional, Tuple

from ..console import log
from ..dag.planner import TaskChain
from ..data.codec import decode_batch, encode_batch, encode_records
from ..data.loader import DatasetConfig, dataset_size, load_shard, shard_dataset
from ..data.models import ParallelLayout, SampleBatch, SampleRecord
from ..errors import CapacityExceeded, CollectTimeout, IndivisibleError, RecvTimeout
from ..transport.collectives import stage_tag
from ..transport.fabric import Fabric
from ..transport.framing import Envelope, counted_size

# Iteration number carried by initial-load frames; never a real iteration.
LOAD_ITERATION = 0xFFFF_FFFF


def collect_tag(stage_id: str) -> int:
    return stage_tag("collect", stage_id)


def dispatch_tag(stage_id: str, to_dp_size: int) -> int:
    return stage_tag("dispatch", stage_id, to_dp_size)


def load_tag(stage_id: str) -> int:
    return stage_tag("load", stage_id)


class CentralController:
    """Controller state: a staging area holding whole global batches between stages.

    The controller gathers a stage's output from the TP rank 0 of every DP
    group, assembles it in dp-rank order, then sends each destination group
    its contiguous slice. Staged bytes are checked against an optional limit
    to model controller memory exhaustion.
    """

    def __init__(
        self,
        fabric: Fabric,
        chain: TaskChain,
        layouts: Mapping[str, ParallelLayout],
        capacity_bytes: Optional[int] = None,
        timeout: Optional[float] = None,
    ):
        self.fabric = fabric
        self.topology = fabric.topology
        self.rank = self.topology.controller_rank
        self.chain = chain
        self.layouts = dict(layouts)
        self.capacity_bytes = capacity_bytes
        self.timeout = timeout
        self.staging: Dict[Tuple[str, int], List[SampleRecord]] = {}
        self.staged_bytes = 0
        self._staged_sizes: Dict[Tuple[str, int], int] = {}
        self.current_stage: Optional[str] = None

    # Initial load

    def central_load(self, source: DatasetConfig, seed: int, bytes_per_token: int) -> int:
        """Load the whole dataset here, then send every worker its shard for the first stage.

        Returns the bytes put on the wire.
        """
        total = dataset_size(source)
        records = load_shard(source, (0, total), 0, 0, seed, bytes_per_token)
        sent = 0
        first = self.chain.nodes[0].node_id
        layout = self.layouts[first]
        shards = shard_dataset(total, layout)
        for rank in range(self.topology.world_size):
            start, stop = shards[layout.dp_rank(rank)]
            payload = encode_records(records[start:stop])
            sent += self.fabric.send(Envelope(self.rank, rank, load_tag(first), LOAD_ITERATION, payload))
        log("controller", f"Loaded {total} samples and sent shards for '{first}' ({sent} bytes)", level="DEBUG")
        return sent

    # Stage transitions

    def central_collect(self, stage_id: str, iteration: int) -> Tuple[List[SampleRecord], int]:
        """Gather a stage's output from every DP group's TP rank 0, in dp-rank order.

        Returns the records and the wire bytes received.

        Raises:
            CollectTimeout: some groups did not send in time.
            CapacityExceeded: the staging area went over its byte limit.
        """
        layout = self.layouts[stage_id]
        records: List[SampleRecord] = []
        missing: List[int] = []
        received = 0
        held = 0
        timeout = self.timeout
        for dp_rank in range(layout.dp_size):
            source = layout.group_ranks(dp_rank)[0]
            try:
                envelope = self.fabric.recv(self.rank, collect_tag(stage_id), iteration, src=source, timeout=timeout)
            except RecvTimeout:
                missing.append(source)
                timeout = 0.0
                continue
            if source != self.rank:
                received += counted_size(len(envelope.payload), self.fabric.max_frame_size)
            held += len(envelope.payload)
            self._stage(len(envelope.payload))
            records.extend(decode_batch(envelope.payload).records)
        if missing:
            raise CollectTimeout(missing)
        self.staging[(stage_id, iteration)] = records
        self._staged_sizes[(stage_id, iteration)] = held
        return records, received

    def central_dispatch(self, stage_id: str, iteration: int, to_layout: ParallelLayout) -> Tuple[List[SampleBatch], int]:
        """Send contiguous G/d_B slices of the staged batch to every rank of each destination group.

        Returns the per-group batches and the wire bytes sent.

        Raises:
            IndivisibleError: d_B does not divide the staged batch.
        """
        records = self.staging.pop((stage_id, iteration))
        self.staged_bytes -= self._staged_sizes.pop((stage_id, iteration), 0)
        global_batch = len(records)
        if global_batch % to_layout.dp_size != 0:
            raise IndivisibleError(global_batch, to_layout.dp_size, what="global batch")
        per_group = global_batch // to_layout.dp_size
        batches: List[SampleBatch] = []
        sent = 0
        tag = dispatch_tag(stage_id, to_layout.dp_size)
        for dp_rank in range(to_layout.dp_size):
            batch = SampleBatch(
                records=records[dp_rank * per_group:(dp_rank + 1) * per_group],
                stage_id=stage_id,
                iteration=iteration,
            )
            payload = encode_batch(batch)
            for rank in to_layout.group_ranks(dp_rank):
                sent += self.fabric.send(Envelope(self.rank, rank, tag, iteration, payload))
            batches.append(batch)
        return batches, sent

    def relay(self, stage_id: str, iteration: int, to_layout: ParallelLayout) -> int:
        """Collect then dispatch one transition; returns the bytes it moved."""
        self.current_stage = stage_id
        _, received = self.central_collect(stage_id, iteration)
        _, sent = self.central_dispatch(stage_id, iteration, to_layout)
        log(
            "controller",
            f"Relayed '{stage_id}' it {iteration}: {received} bytes in, {sent} bytes out",
            level="DEBUG",
        )
        return received + sent

    def transitions(self) -> List[Tuple[str, ParallelLayout]]:
        """(producer stage, consumer layout) for every transition of the chain."""
        nodes = self.chain.nodes
        return [(nodes[i].node_id, self.layouts[nodes[i + 1].node_id]) for i in range(len(nodes) - 1)]

    def run_iteration(self, iteration: int) -> Dict[str, int]:
        """Relay every transition of one iteration; used when the controller has its own endpoint."""
        return {stage_id: self.relay(stage_id, iteration, layout) for stage_id, layout in self.transitions()}

    def _stage(self, nbytes: int) -> None:
        self.staged_bytes += nbytes
        if self.capacity_bytes is not None and self.staged_bytes > self.capacity_bytes:
            raise CapacityExceeded(self.staged_bytes, self.capacity_bytes)

