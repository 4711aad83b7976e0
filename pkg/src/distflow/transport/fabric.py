"""Fabric abstraction shared by both backends."""

import threading
import time
from abc import ABC, abstractmethod
from collections import deque
from enum import Enum
from typing import Deque, Dict, Iterable, List, Optional, Set, Tuple

from ..config import get_config
from ..errors import PeerClosed, RecvTimeout
from .counters import TrafficCounters, TrafficReport
from .framing import Envelope
from .topology import ClusterTopology

_MailKey = Tuple[int, int, int, int]  # (dst, src, tag, iteration)


class Backend(str, Enum):
    """Fabric implementations."""
    INPROC = "inproc"
    TCP = "tcp"


class Mailbox:
    """Delivered envelopes waiting for a matching recv, FIFO per (dst, src, tag, iteration)."""

    def __init__(self) -> None:
        self._cond = threading.Condition()
        self._queues: Dict[_MailKey, Deque[Envelope]] = {}
        self._closed_reason: Optional[str] = None
        self._closed_links: Set[Tuple[int, int]] = set()

    def put(self, envelope: Envelope) -> None:
        key = (envelope.dst_rank, envelope.src_rank, envelope.tag, envelope.iteration)
        with self._cond:
            self._queues.setdefault(key, deque()).append(envelope)
            self._cond.notify_all()

    def get(
        self,
        rank: int,
        tag: int,
        iteration: int,
        src: Optional[int],
        timeout: Optional[float],
    ) -> Envelope:
        deadline = None if timeout is None else time.monotonic() + timeout
        with self._cond:
            while True:
                key = self._find(rank, tag, iteration, src)
                if key is not None:
                    queue = self._queues[key]
                    envelope = queue.popleft()
                    if not queue:
                        del self._queues[key]
                    return envelope
                if self._closed_reason is not None:
                    raise PeerClosed(self._closed_reason)
                if src is not None and (rank, src) in self._closed_links:
                    raise PeerClosed(f"Connection from rank {src} to rank {rank} closed")
                if deadline is None:
                    self._cond.wait()
                    continue
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    source = "any rank" if src is None else f"rank {src}"
                    raise RecvTimeout(
                        f"Rank {rank} timed out after {timeout:.3f}s waiting for tag {tag:#x} "
                        f"iteration {iteration} from {source}"
                    )
                self._cond.wait(remaining)

    def _find(self, rank: int, tag: int, iteration: int, src: Optional[int]) -> Optional[_MailKey]:
        if src is not None:
            key = (rank, src, tag, iteration)
            return key if key in self._queues else None
        matches = [key for key in self._queues if key[0] == rank and key[2] == tag and key[3] == iteration]
        return min(matches) if matches else None

    def link_closed(self, dst: int, src: int) -> None:
        with self._cond:
            self._closed_links.add((dst, src))
            self._cond.notify_all()

    def close(self, reason: str) -> None:
        with self._cond:
            if self._closed_reason is None:
                self._closed_reason = reason
            self._cond.notify_all()

    @property
    def closed(self) -> bool:
        return self._closed_reason is not None


class Fabric(ABC):
    """Endpoints for a set of local ranks plus byte counters.

    Each endpoint belongs to one logical owner, but recv calls that match
    on different (src, tag, iteration) keys may run concurrently, and a
    blocked recv never stalls other endpoints.
    """

    backend: Backend

    def __init__(
        self,
        topology: ClusterTopology,
        local_ranks: Optional[Iterable[int]] = None,
        seed: int = 0,
        max_frame_size: Optional[int] = None,
        recv_timeout: Optional[float] = None,
    ):
        config = get_config()
        self.topology = topology
        self.seed = seed
        self.local_ranks: List[int] = (
            list(range(topology.endpoint_count)) if local_ranks is None else sorted(local_ranks)
        )
        self.max_frame_size = max_frame_size or config.max_frame_size
        self.recv_timeout = recv_timeout if recv_timeout is not None else config.recv_timeout_s
        self.counters = TrafficCounters(topology)
        self.mailbox = Mailbox()

    def send(self, envelope: Envelope) -> int:
        """Send an envelope; returns the bytes added to the counters (0 for self-delivery)."""
        self._check_rank(envelope.dst_rank)
        if envelope.src_rank not in self.local_ranks:
            raise ValueError(f"Rank {envelope.src_rank} is not local to this fabric")
        if self.mailbox.closed:
            raise PeerClosed("Fabric is closed")
        if envelope.src_rank == envelope.dst_rank:
            self.mailbox.put(envelope)
            return 0
        return self._transmit(envelope)

    def recv(
        self,
        rank: int,
        tag: int,
        iteration: int,
        src: Optional[int] = None,
        timeout: Optional[float] = None,
    ) -> Envelope:
        """Block until an envelope for (rank, tag, iteration) arrives, optionally from one source.

        Raises:
            RecvTimeout: nothing matched within the timeout.
            PeerClosed: the fabric was aborted or the source link went down.
        """
        if rank not in self.local_ranks:
            raise ValueError(f"Rank {rank} is not local to this fabric")
        if src is not None:
            self._check_rank(src)
        return self.mailbox.get(rank, tag, iteration, src, self.recv_timeout if timeout is None else timeout)

    def traffic(self) -> TrafficReport:
        return self.counters.snapshot()

    def abort(self, reason: str) -> None:
        """Fail every pending and future recv; used for teardown after a fatal error."""
        self.mailbox.close(reason)

    def close(self) -> None:
        self.mailbox.close("Fabric is closed")
        self._shutdown()

    def __enter__(self) -> "Fabric":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    @abstractmethod
    def _transmit(self, envelope: Envelope) -> int:
        """Move an envelope to another rank and update counters."""

    def _shutdown(self) -> None:
        """Release backend resources."""

    def _check_rank(self, rank: int) -> None:
        if not 0 <= rank < self.topology.endpoint_count:
            raise ValueError(f"Rank {rank} outside [0, {self.topology.endpoint_count})")


def create_fabric(
    topology: ClusterTopology,
    backend: Backend,
    seed: int = 0,
    local_ranks: Optional[Iterable[int]] = None,
    **options,
) -> Fabric:
    """Create a connected fabric with zeroed counters.

    INPROC hosts every rank in this process. TCP hosts `local_ranks` (all by
    default) and connects them to every other endpoint over loopback sockets.
    """
    backend = Backend(backend)
    if topology.world_size <= 0:
        raise ValueError("World size must be positive")
    if backend == Backend.INPROC:
        from .inproc import InProcFabric

        return InProcFabric(topology, local_ranks=local_ranks, seed=seed, **options)

    from .tcp import TcpFabric

    return TcpFabric(topology, local_ranks=local_ranks, seed=seed, **options)
