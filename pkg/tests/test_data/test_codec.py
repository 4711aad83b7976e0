"""Tests for record serialization and the data models."""

import pytest

from distflow.data.codec import decode_batch, decode_records, encode_batch, encode_records
from distflow.data.models import ParallelLayout, Rollout, SampleBatch, SampleRecord, StageLayoutSpec
from distflow.errors import LayoutError
from distflow.transport.topology import ClusterTopology


def _record(sample_id):
    return SampleRecord(
        sample_id=sample_id,
        prompt=b"\x00\xffprompt",
        prompt_tokens=2,
        group=[
            Rollout(payload=b"resp-a", token_count=3, channels={"reward": 0.25, "advantage": -1.5}),
            Rollout(payload=b"", token_count=0),
        ],
        meta={"source": "synthetic"},
    )


class TestCodec:
    """Test msgpack encoding of records and batches."""

    def test_records_survive_the_wire(self):
        """Test that binary payloads, channels and meta decode unchanged."""
        records = [_record(1), _record(2**40)]
        assert decode_records(encode_records(records)) == records

    def test_batch_keeps_stage_and_iteration(self):
        """Test that batch headers decode unchanged."""
        batch = SampleBatch(records=[_record(5)], stage_id="reward_compute", iteration=12)
        decoded = decode_batch(encode_batch(batch))
        assert decoded == batch

    def test_encoding_ignores_channel_insertion_order(self):
        """Test that equal records encode to equal bytes."""
        a = Rollout(payload=b"x", token_count=1, channels={"a": 1.0, "b": 2.0})
        b = Rollout(payload=b"x", token_count=1, channels={"b": 2.0, "a": 1.0})
        assert encode_records([SampleRecord(sample_id=0, group=[a])]) == encode_records(
            [SampleRecord(sample_id=0, group=[b])]
        )


class TestModels:
    """Test SampleBatch and layout models."""

    def test_duplicate_ids_rejected(self):
        """Test that a batch may not hold one sample twice."""
        with pytest.raises(ValueError, match="Duplicate"):
            SampleBatch(records=[_record(1), _record(1)])

    def test_token_and_byte_counts(self):
        """Test the record and batch size helpers."""
        record = _record(1)
        assert record.token_count == 3
        assert record.payload_bytes == len(b"\x00\xffprompt") + len(b"resp-a")
        assert SampleBatch(records=[_record(1), _record(2)]).token_count == 6

    def test_layout_ranks(self):
        """Test dp and tp ranks of a layout."""
        layout = ParallelLayout(dp_size=4, tp_size=2)
        assert (layout.dp_rank(5), layout.tp_rank(5)) == (2, 1)
        assert layout.group_ranks(3) == [6, 7]
        topology = ClusterTopology(num_nodes=2, workers_per_node=4)
        assert layout.groups_per_node(topology) == 2
        assert layout.local_dp_ranks(topology, 1) == [2, 3]

    def test_layout_check(self):
        """Test that a layout must match the world size."""
        topology = ClusterTopology(num_nodes=2, workers_per_node=4)
        ParallelLayout(dp_size=4, tp_size=2).check(topology)
        with pytest.raises(LayoutError):
            ParallelLayout(dp_size=2, tp_size=2).check(topology)

    def test_stage_layout_spec_derives_dp(self):
        """Test that a missing dp_size is derived from the world size."""
        topology = ClusterTopology(num_nodes=2, workers_per_node=4)
        assert StageLayoutSpec(tp_size=2).resolve(topology) == ParallelLayout(dp_size=4, tp_size=2)
        with pytest.raises(LayoutError):
            StageLayoutSpec(tp_size=3).resolve(topology)
