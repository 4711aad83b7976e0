"""Tests for the single-controller baseline."""

from concurrent.futures import ThreadPoolExecutor

import pytest

from distflow.baseline.controller import (
    LOAD_ITERATION,
    CentralController,
    collect_tag,
    dispatch_tag,
    load_tag,
)
from distflow.dag.models import NodeRole, NodeSpec, NodeType
from distflow.dag.planner import TaskChain
from distflow.data.codec import decode_batch, decode_records, encode_batch
from distflow.data.loader import DatasetConfig
from distflow.data.models import ParallelLayout, SampleBatch, SampleRecord
from distflow.errors import CapacityExceeded, CollectTimeout
from distflow.runtime.datapath import CentralDataPath
from distflow.transport.fabric import Backend, create_fabric
from distflow.transport.framing import Envelope, counted_size
from distflow.transport.topology import ClusterTopology

CHAIN = TaskChain(
    graph_name="g",
    nodes=[
        NodeSpec(node_id="gen", role=NodeRole.ACTOR, node_type=NodeType.MODEL_INFERENCE, func_tag="generate"),
        NodeSpec(node_id="train", role=NodeRole.ACTOR, node_type=NodeType.MODEL_TRAIN, deps=("gen",)),
    ],
)


def _batch(ids, stage="gen", iteration=0):
    return SampleBatch(
        records=[SampleRecord(sample_id=i, prompt=b"x" * 16) for i in ids], stage_id=stage, iteration=iteration
    )


def _publish_all(fabric, controller_rank, layout, per_group, stage="gen", iteration=0):
    """TP rank 0 of every group sends its output to the controller."""
    for dp_rank in range(layout.dp_size):
        rank = layout.group_ranks(dp_rank)[0]
        batch = _batch(range(dp_rank * per_group, (dp_rank + 1) * per_group), stage, iteration)
        fabric.send(Envelope(rank, controller_rank, collect_tag(stage), iteration, encode_batch(batch)))


@pytest.fixture
def eight_workers():
    topology = ClusterTopology(num_nodes=2, workers_per_node=4)
    layouts = {"gen": ParallelLayout(dp_size=8), "train": ParallelLayout(dp_size=4, tp_size=2)}
    with create_fabric(topology, Backend.INPROC) as fabric:
        yield fabric, layouts


class TestCentralController:
    """Test CentralController functionality."""

    def test_collect_orders_by_dp_rank(self, eight_workers):
        """Test that collection assembles records in dp order and counts off-rank bytes."""
        fabric, layouts = eight_workers
        controller = CentralController(fabric, CHAIN, layouts)
        _publish_all(fabric, 0, layouts["gen"], per_group=2)

        records, received = controller.central_collect("gen", 0)
        assert [r.sample_id for r in records] == list(range(16))
        assert received == fabric.traffic().rank_ingress[0]
        assert received == 7 * counted_size(len(encode_batch(_batch([0, 1]))), fabric.max_frame_size)

    def test_dispatch_sends_contiguous_slices_to_every_tp_rank(self, eight_workers):
        """Test that each destination group gets G/d_B records, delivered to all of its ranks."""
        fabric, layouts = eight_workers
        controller = CentralController(fabric, CHAIN, layouts)
        _publish_all(fabric, 0, layouts["gen"], per_group=2)
        controller.central_collect("gen", 0)
        egress_before = fabric.traffic().rank_egress[0]

        batches, sent = controller.central_dispatch("gen", 0, layouts["train"])
        assert [b.sample_ids for b in batches] == [list(range(k * 4, (k + 1) * 4)) for k in range(4)]
        assert sent == fabric.traffic().rank_egress[0] - egress_before
        for rank in range(8):
            envelope = fabric.recv(rank, dispatch_tag("gen", 4), 0, src=0, timeout=1.0)
            assert decode_batch(envelope.payload).sample_ids == batches[rank // 2].sample_ids
        assert controller.staged_bytes == 0
        assert controller.staging == {}

    def test_relay_traffic_lands_on_controller_node(self, eight_workers):
        """Test that a relay's bytes all cross the controller's node."""
        fabric, layouts = eight_workers
        controller = CentralController(fabric, CHAIN, layouts)
        _publish_all(fabric, 0, layouts["gen"], per_group=2)
        moved = controller.relay("gen", 0, layouts["train"])

        report = fabric.traffic()
        assert moved == report.rank_ingress[0] + report.rank_egress[0]
        assert report.pair_bytes[1][1] == 0
        assert controller.current_stage == "gen"

    def test_capacity_exceeded(self, eight_workers):
        """Test that staging more than the limit raises CapacityExceeded."""
        fabric, layouts = eight_workers
        controller = CentralController(fabric, CHAIN, layouts, capacity_bytes=200)
        _publish_all(fabric, 0, layouts["gen"], per_group=2)
        with pytest.raises(CapacityExceeded) as info:
            controller.central_collect("gen", 0)
        assert info.value.limit == 200
        assert info.value.held_bytes > 200

    def test_collect_timeout_names_missing_ranks(self, eight_workers):
        """Test that silent groups are reported by rank."""
        fabric, layouts = eight_workers
        controller = CentralController(fabric, CHAIN, layouts, timeout=0.05)
        for rank in (0, 1, 2, 3, 4, 6):
            fabric.send(Envelope(rank, 0, collect_tag("gen"), 0, encode_batch(_batch([rank]))))
        with pytest.raises(CollectTimeout) as info:
            controller.central_collect("gen", 0)
        assert info.value.missing_ranks == [5, 7]

    def test_central_load_sends_every_shard(self, eight_workers):
        """Test that the initial load sends each worker its first-stage shard."""
        fabric, layouts = eight_workers
        controller = CentralController(fabric, CHAIN, layouts)
        sent = controller.central_load(DatasetConfig(size=16, prompt_tokens=2), seed=1, bytes_per_token=4)

        assert sent == fabric.traffic().rank_egress[0]
        shard = fabric.recv(5, load_tag("gen"), LOAD_ITERATION, src=0, timeout=1.0)
        assert [r.sample_id for r in decode_records(shard.payload)] == [10, 11]

    def test_transitions(self, eight_workers):
        """Test that every chain edge is a (producer, consumer layout) transition."""
        fabric, layouts = eight_workers
        controller = CentralController(fabric, CHAIN, layouts)
        assert controller.transitions() == [("gen", layouts["train"])]

    def test_dedicated_controller_endpoint(self):
        """Test a controller on its own endpoint collecting from every worker."""
        topology = ClusterTopology(num_nodes=1, workers_per_node=2, dedicated_controller=True)
        layouts = {"gen": ParallelLayout(dp_size=2), "train": ParallelLayout(dp_size=2)}
        with create_fabric(topology, Backend.INPROC) as fabric:
            controller = CentralController(fabric, CHAIN, layouts)
            assert controller.rank == 2
            _publish_all(fabric, 2, layouts["gen"], per_group=3)
            assert controller.run_iteration(0)["gen"] > 0
            report = fabric.traffic()
            assert report.node_ingress[1] > 0 and report.node_egress[1] > 0


class TestCentralDataPath:
    """Test the central-mode data path."""

    def test_tp_followers_do_not_publish(self, eight_workers):
        """Test that only TP rank 0 sends stage output to the controller."""
        fabric, layouts = eight_workers
        datapath = CentralDataPath(3, ParallelLayout(dp_size=8), 16, fabric)
        handoff = datapath.publish("train", 0, layouts["train"], _batch([1], stage="train"))
        assert handoff.suppressed
        assert handoff.nbytes == 0
        assert fabric.traffic().total_egress == 0

    def test_inline_controller_relays_before_fetch(self, eight_workers):
        """Test that rank 0 hosting the controller relays, then every rank fetches its slice."""
        fabric, layouts = eight_workers
        controller = CentralController(fabric, CHAIN, layouts)
        paths = [
            CentralDataPath(rank, layouts["gen"], 16, fabric, controller=controller if rank == 0 else None)
            for rank in range(8)
        ]
        for rank, path in enumerate(paths):
            path.publish("gen", 0, layouts["gen"], _batch([2 * rank, 2 * rank + 1]))

        with ThreadPoolExecutor(max_workers=8) as executor:
            results = list(executor.map(lambda path: path.fetch("gen", 0, layouts["train"]), paths))

        assert [batch.sample_ids for batch, _ in results] == [
            list(range((rank // 2) * 4, (rank // 2) * 4 + 4)) for rank in range(8)
        ]
        assert results[0][1] > 0
        assert all(nbytes == 0 for _, nbytes in results[1:])
