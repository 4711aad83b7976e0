"""Tests for collectives over the fabric."""

from concurrent.futures import ThreadPoolExecutor

import pytest

from distflow.errors import RecvTimeout
from distflow.transport.collectives import all_to_all, gather_to, scatter_from, stage_tag
from distflow.transport.fabric import Backend, create_fabric
from distflow.transport.framing import HANDSHAKE_TAG, Envelope
from distflow.transport.topology import ClusterTopology


@pytest.fixture
def fabric():
    topology = ClusterTopology(num_nodes=2, workers_per_node=2)
    with create_fabric(topology, Backend.INPROC) as fabric:
        yield fabric


def _run_all(count, fn):
    with ThreadPoolExecutor(max_workers=count) as executor:
        return list(executor.map(fn, range(count)))


class TestStageTag:
    """Test stage_tag functionality."""

    def test_stable_and_distinct(self):
        """Test that tags are stable per input and differ across purposes."""
        assert stage_tag("collect", "actor_generate") == stage_tag("collect", "actor_generate")
        assert stage_tag("collect", "actor_generate") != stage_tag("dispatch", "actor_generate")
        assert stage_tag("redistribute", "a", 4) != stage_tag("redistribute", "a", 8)

    def test_never_reserved(self):
        """Test that stage tags avoid the handshake tag and the low reserved range."""
        for index in range(500):
            tag = stage_tag("p", f"stage-{index}")
            assert tag != HANDSHAKE_TAG
            assert tag >= 0x1000_0000


class TestAllToAll:
    """Test all_to_all functionality."""

    def test_exchange(self, fabric):
        """Test that every participant receives one payload from every other, ordered by source."""
        def exchange(rank):
            outgoing = [f"{rank}->{dst}".encode() for dst in range(4)]
            return all_to_all(fabric, rank, range(4), outgoing, tag=0x100, iteration=0, timeout=5.0)

        results = _run_all(4, exchange)
        for rank, received in enumerate(results):
            assert received == [f"{src}->{rank}".encode() for src in range(4)]

    def test_self_payload_is_not_counted(self, fabric):
        """Test that only the off-rank payloads touch the counters."""
        def exchange(rank):
            return all_to_all(fabric, rank, range(4), [b"x" * 10] * 4, tag=0x101, iteration=0, timeout=5.0)

        _run_all(4, exchange)
        assert fabric.traffic().total_egress == 4 * 3 * 30

    def test_subset_of_ranks(self, fabric):
        """Test an exchange among node leaders only."""
        def exchange(index):
            rank = [0, 2][index]
            return all_to_all(fabric, rank, [0, 2], [b"a", b"b"], tag=0x102, iteration=3, timeout=5.0)

        assert _run_all(2, exchange) == [[b"a", b"a"], [b"b", b"b"]]

    def test_rejects_non_participant(self, fabric):
        """Test that a caller outside the participant list is rejected."""
        with pytest.raises(ValueError):
            all_to_all(fabric, 1, [0, 2], [b"", b""], tag=1, iteration=0)

    def test_rejects_wrong_payload_count(self, fabric):
        """Test that one payload per participant is required."""
        with pytest.raises(ValueError):
            all_to_all(fabric, 0, [0, 2], [b""], tag=1, iteration=0)


class TestGatherScatter:
    """Test gather_to and scatter_from functionality."""

    def test_gather(self, fabric):
        """Test that the root gets payloads in participant order and others get None."""
        results = _run_all(4, lambda rank: gather_to(fabric, rank, 0, bytes([rank]), tag=0x200, iteration=1, timeout=5.0))
        assert results[0] == [b"\x00", b"\x01", b"\x02", b"\x03"]
        assert results[1:] == [None, None, None]

    def test_gather_names_missing_ranks(self, fabric):
        """Test that a gather timeout names every silent rank."""
        fabric.send(Envelope(2, 0, 0x201, 0, b"late-but-present"))
        with pytest.raises(RecvTimeout) as info:
            gather_to(fabric, 0, 0, b"", tag=0x201, iteration=0, timeout=0.05)
        assert info.value.missing_ranks == [1, 3]

    def test_scatter(self, fabric):
        """Test that participant i receives part i."""
        parts = [b"p0", b"p1", b"p2", b"p3"]
        results = _run_all(
            4,
            lambda rank: scatter_from(fabric, rank, 0, parts if rank == 0 else None, tag=0x300, iteration=0, timeout=5.0),
        )
        assert results == parts

    def test_scatter_needs_every_part(self, fabric):
        """Test that the root must supply one part per participant."""
        with pytest.raises(ValueError):
            scatter_from(fabric, 0, 0, [b"only"], tag=0x301, iteration=0)
