"""TCP fabric: one loopback connection per rank pair, a reader thread per connection."""

import socket
import threading
import time
from typing import Dict, List, Mapping, Optional, Tuple

from ..config import get_config
from ..console import log
from ..errors import BindError, HandshakeError, HandshakeTimeout, PeerClosed
from .fabric import Backend, Fabric
from .framing import (
    LENGTH_SIZE,
    Envelope,
    FrameHeader,
    decode_body,
    decode_handshake,
    decode_length,
    encode_envelope,
    encode_handshake,
)
from .topology import ClusterTopology

Address = Tuple[str, int]


def _recv_exact(sock: socket.socket, n: int) -> Optional[bytes]:
    buf = bytearray(n)
    view = memoryview(buf)
    got = 0
    while got < n:
        k = sock.recv_into(view[got:])
        if k == 0:
            return None
        got += k
    return bytes(buf)


def _read_frame(sock: socket.socket) -> Optional[Tuple[FrameHeader, bytes, int]]:
    """Read one frame; returns (header, payload, length) or None on EOF."""
    prefix = _recv_exact(sock, LENGTH_SIZE)
    if prefix is None:
        return None
    length = decode_length(prefix)
    body = _recv_exact(sock, length)
    if body is None:
        return None
    header, payload = decode_body(body)
    return header, payload, length


class _Connection:
    """A socket between one local rank and one peer rank."""

    def __init__(self, sock: socket.socket, local_rank: int, peer_rank: int):
        self.sock = sock
        self.local_rank = local_rank
        self.peer_rank = peer_rank
        self.send_lock = threading.Lock()
        self.reader: Optional[threading.Thread] = None


class TcpFabric(Fabric):
    """Full mesh of loopback TCP connections between endpoint ranks.

    Rank r accepts connections from higher ranks and dials lower ones. Each
    side sends a handshake frame carrying (rank, world_size) and rejects a
    peer that disagrees on the world size.
    """

    backend = Backend.TCP

    def __init__(
        self,
        topology: ClusterTopology,
        local_ranks=None,
        seed: int = 0,
        max_frame_size: Optional[int] = None,
        recv_timeout: Optional[float] = None,
        host: Optional[str] = None,
        base_port: Optional[int] = None,
        handshake_timeout: Optional[float] = None,
        addresses: Optional[Mapping[int, Address]] = None,
    ):
        super().__init__(topology, local_ranks, seed, max_frame_size, recv_timeout)
        config = get_config()
        self.host = host or config.tcp_host
        self.base_port = config.tcp_base_port if base_port is None else base_port
        self.handshake_timeout = handshake_timeout or config.handshake_timeout_s
        self.world = topology.endpoint_count
        self._connections: Dict[Tuple[int, int], _Connection] = {}
        self._conn_lock = threading.Lock()
        self._listeners: Dict[int, socket.socket] = {}
        self._closing = False

        if self.base_port == 0 and addresses is None and len(self.local_ranks) != self.world:
            raise BindError("Ephemeral ports need every rank in one process; set a base port")

        try:
            self._bind_listeners()
            self.addresses: Dict[int, Address] = dict(addresses or {})
            for rank, listener in self._listeners.items():
                self.addresses[rank] = listener.getsockname()[:2]
            for rank in range(self.world):
                self.addresses.setdefault(rank, (self.host, self.base_port + rank))
            self._connect_mesh()
        except BaseException:
            self._shutdown()
            raise

        for connection in list(self._connections.values()):
            self._start_reader(connection)
        log("fabric", f"TCP fabric up for ranks {self.local_ranks} of {self.world}", level="DEBUG")

    # Setup

    def _bind_listeners(self) -> None:
        for rank in self.local_ranks:
            port = 0 if self.base_port == 0 else self.base_port + rank
            listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
            listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
            try:
                listener.bind((self.host, port))
            except OSError as e:
                listener.close()
                raise BindError(f"Rank {rank} cannot bind {self.host}:{port}: {e}") from e
            listener.listen(max(1, self.world))
            self._listeners[rank] = listener

    def _connect_mesh(self) -> None:
        deadline = time.monotonic() + self.handshake_timeout
        errors: List[BaseException] = []
        acceptors = []
        for rank in self.local_ranks:
            expected = self.world - 1 - rank
            if expected == 0:
                continue
            thread = threading.Thread(
                target=self._accept_loop,
                args=(rank, expected, deadline, errors),
                name=f"distflow-accept-{rank}",
                daemon=True,
            )
            thread.start()
            acceptors.append(thread)

        for rank in self.local_ranks:
            for peer in range(rank):
                self._dial(rank, peer, deadline)

        for thread in acceptors:
            thread.join(max(0.0, deadline - time.monotonic()) + 0.5)
        if errors:
            raise errors[0]
        missing = [
            (rank, peer)
            for rank in self.local_ranks
            for peer in range(self.world)
            if peer != rank and (rank, peer) not in self._connections
        ]
        if missing:
            raise HandshakeTimeout(
                f"Handshake not completed within {self.handshake_timeout}s for links {missing[:8]}"
            )

    def _accept_loop(self, rank: int, expected: int, deadline: float, errors: List[BaseException]) -> None:
        listener = self._listeners[rank]
        accepted = 0
        try:
            while accepted < expected:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    return
                listener.settimeout(remaining)
                try:
                    sock, _ = listener.accept()
                except socket.timeout:
                    return
                sock.settimeout(max(0.1, deadline - time.monotonic()))
                frame = _read_frame(sock)
                if frame is None:
                    sock.close()
                    raise HandshakeError(f"Peer closed during handshake with rank {rank}")
                header, payload, _ = frame
                try:
                    peer = decode_handshake(header, payload, self.world)
                    if peer <= rank:
                        raise HandshakeError(f"Rank {rank} only accepts higher ranks, got {peer}")
                    if (rank, peer) in self._connections:
                        raise HandshakeError(f"Duplicate connection from rank {peer} to rank {rank}")
                except HandshakeError:
                    sock.close()
                    raise
                sock.sendall(encode_handshake(rank, self.world))
                self._register(sock, rank, peer)
                accepted += 1
        except BaseException as e:  # surfaced by _connect_mesh
            errors.append(e)

    def _dial(self, rank: int, peer: int, deadline: float) -> None:
        address = self.addresses[peer]
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                raise HandshakeTimeout(f"Rank {rank} could not reach rank {peer} at {address[0]}:{address[1]}")
            try:
                sock = socket.create_connection(address, timeout=remaining)
                break
            except OSError:
                time.sleep(0.05)
        sock.settimeout(max(0.1, deadline - time.monotonic()))
        sock.sendall(encode_handshake(rank, self.world))
        frame = _read_frame(sock)
        if frame is None:
            sock.close()
            raise HandshakeError(f"Rank {peer} closed the connection during handshake")
        header, payload, _ = frame
        try:
            answered = decode_handshake(header, payload, self.world)
        except HandshakeError:
            sock.close()
            raise
        if answered != peer:
            sock.close()
            raise HandshakeError(f"Dialed rank {peer} but rank {answered} answered")
        self._register(sock, rank, peer)

    def _register(self, sock: socket.socket, rank: int, peer: int) -> None:
        sock.settimeout(None)
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
        with self._conn_lock:
            self._connections[(rank, peer)] = _Connection(sock, rank, peer)

    # Data path

    def _start_reader(self, connection: _Connection) -> None:
        thread = threading.Thread(
            target=self._read_loop,
            args=(connection,),
            name=f"distflow-read-{connection.local_rank}-{connection.peer_rank}",
            daemon=True,
        )
        connection.reader = thread
        thread.start()

    def _read_loop(self, connection: _Connection) -> None:
        partial: Dict[Tuple[int, int, int], List[bytes]] = {}
        try:
            while True:
                frame = _read_frame(connection.sock)
                if frame is None:
                    break
                header, payload, length = frame
                self.counters.record_recv(connection.local_rank, length, header.tag, header.iteration)
                if header.chunk_count <= 1:
                    self.mailbox.put(Envelope(header.src_rank, header.dst_rank, header.tag, header.iteration, payload))
                    continue
                key = (header.src_rank, header.tag, header.iteration)
                chunks = partial.setdefault(key, [])
                chunks.append(payload)
                if header.chunk_index == header.chunk_count - 1:
                    del partial[key]
                    self.mailbox.put(
                        Envelope(header.src_rank, header.dst_rank, header.tag, header.iteration, b"".join(chunks))
                    )
        except (OSError, ValueError) as e:
            if not self._closing:
                log("fabric", f"Link {connection.peer_rank}->{connection.local_rank} failed: {e}", level="WARNING")
        finally:
            self.mailbox.link_closed(connection.local_rank, connection.peer_rank)

    def _transmit(self, envelope: Envelope) -> int:
        connection = self._connections.get((envelope.src_rank, envelope.dst_rank))
        if connection is None:
            raise PeerClosed(f"No connection from rank {envelope.src_rank} to rank {envelope.dst_rank}")
        frames = encode_envelope(envelope, self.max_frame_size)
        nbytes = sum(len(frame) - LENGTH_SIZE for frame in frames)
        try:
            with connection.send_lock:
                for frame in frames:
                    connection.sock.sendall(frame)
        except OSError as e:
            raise PeerClosed(f"Send from rank {envelope.src_rank} to rank {envelope.dst_rank} failed: {e}") from e
        self.counters.record_send(envelope.src_rank, envelope.dst_rank, nbytes, envelope.tag, envelope.iteration)
        return nbytes

    def _shutdown(self) -> None:
        self._closing = True
        for listener in self._listeners.values():
            try:
                listener.close()
            except OSError:
                pass
        with self._conn_lock:
            connections = list(self._connections.values())
        for connection in connections:
            try:
                connection.sock.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                connection.sock.close()
            except OSError:
                pass
        for connection in connections:
            if connection.reader is not None and connection.reader is not threading.current_thread():
                connection.reader.join(timeout=1.0)
