"""In-process fabric: every endpoint shares one mailbox."""

from typing import Iterable, Optional

from ..errors import FrameTooLarge
from .fabric import Backend, Fabric
from .framing import MAX_CHUNKS, Envelope, counted_size
from .topology import ClusterTopology


class InProcFabric(Fabric):
    """Delivers envelopes by reference; counts bytes exactly as the TCP framing would."""

    backend = Backend.INPROC

    def __init__(
        self,
        topology: ClusterTopology,
        local_ranks: Optional[Iterable[int]] = None,
        seed: int = 0,
        max_frame_size: Optional[int] = None,
        recv_timeout: Optional[float] = None,
    ):
        super().__init__(topology, local_ranks, seed, max_frame_size, recv_timeout)
        if len(self.local_ranks) != topology.endpoint_count:
            raise ValueError("The in-process fabric hosts every rank")

    def _transmit(self, envelope: Envelope) -> int:
        chunks = max(1, -(-len(envelope.payload) // self.max_frame_size))
        if chunks > MAX_CHUNKS:
            raise FrameTooLarge(
                f"Payload of {len(envelope.payload)} bytes needs {chunks} chunks, at most {MAX_CHUNKS} allowed"
            )
        nbytes = counted_size(len(envelope.payload), self.max_frame_size)
        self.counters.record_send(envelope.src_rank, envelope.dst_rank, nbytes, envelope.tag, envelope.iteration)
        self.counters.record_recv(envelope.dst_rank, nbytes, envelope.tag, envelope.iteration)
        self.mailbox.put(envelope)
        return nbytes
