"""Wire format for fabric frames.

Frame layout, all fields little-endian:

    +--------+----------+----------+-----+-----------+-------------+-------------+---------+
    | length | src_rank | dst_rank | tag | iteration | chunk_index | chunk_count | payload |
    |  u32   |   u32    |   u32    | u32 |    u32    |     u16     |     u16     |  bytes  |
    +--------+----------+----------+-----+-----------+-------------+-------------+---------+

`length` counts every byte after itself (20 header bytes plus the payload),
and it is also the number of bytes a frame adds to the traffic counters.
"""

import struct
from dataclasses import dataclass
from typing import Iterator, List, NamedTuple, Tuple

from ..errors import FrameTooLarge, HandshakeError

_LENGTH_FORMAT = "<I"
_HEADER_FORMAT = "<IIIIHH"

LENGTH_SIZE = struct.calcsize(_LENGTH_FORMAT)
HEADER_SIZE = struct.calcsize(_HEADER_FORMAT)

MAX_CHUNKS = 0xFFFF
HANDSHAKE_TAG = 0xFFFF_FFFF
TAG_METRICS = 0x0000_0001
TAG_LOAD = 0x0000_0002
HANDSHAKE_MAGIC = b"DFSIM1"
_HANDSHAKE_BODY = "<II"


@dataclass(frozen=True)
class Envelope:
    """A routed message between two ranks."""

    src_rank: int
    dst_rank: int
    tag: int
    iteration: int
    payload: bytes = b""


class FrameHeader(NamedTuple):
    src_rank: int
    dst_rank: int
    tag: int
    iteration: int
    chunk_index: int
    chunk_count: int


def counted_size(payload_length: int, max_frame_size: int) -> int:
    """Bytes an envelope adds to the counters once split into frames."""
    chunks = max(1, -(-payload_length // max_frame_size))
    return payload_length + chunks * HEADER_SIZE


def split_payload(payload: bytes, max_frame_size: int) -> List[bytes]:
    """Split a payload into chunks of at most max_frame_size bytes (at least one chunk)."""
    if max_frame_size <= 0:
        raise ValueError("max_frame_size must be positive")
    if not payload:
        return [b""]
    chunks = [payload[start:start + max_frame_size] for start in range(0, len(payload), max_frame_size)]
    if len(chunks) > MAX_CHUNKS:
        raise FrameTooLarge(
            f"Payload of {len(payload)} bytes needs {len(chunks)} chunks, at most {MAX_CHUNKS} allowed"
        )
    return chunks


def encode_frame(header: FrameHeader, payload: bytes) -> bytes:
    """Encode one frame including its length prefix."""
    body = struct.pack(_HEADER_FORMAT, *header) + payload
    return struct.pack(_LENGTH_FORMAT, len(body)) + body


def encode_envelope(envelope: Envelope, max_frame_size: int) -> List[bytes]:
    """Encode an envelope as one or more frames, chunking transparently."""
    chunks = split_payload(envelope.payload, max_frame_size)
    count = len(chunks)
    return [
        encode_frame(
            FrameHeader(envelope.src_rank, envelope.dst_rank, envelope.tag, envelope.iteration, index, count),
            chunk,
        )
        for index, chunk in enumerate(chunks)
    ]


def decode_length(prefix: bytes) -> int:
    if len(prefix) != LENGTH_SIZE:
        raise ValueError(f"Length prefix must be {LENGTH_SIZE} bytes, got {len(prefix)}")
    (length,) = struct.unpack(_LENGTH_FORMAT, prefix)
    if length < HEADER_SIZE:
        raise ValueError(f"Frame length {length} is shorter than the {HEADER_SIZE} byte header")
    return length


def decode_body(body: bytes) -> Tuple[FrameHeader, bytes]:
    """Split a frame body (everything after the length prefix) into header and payload."""
    header = FrameHeader(*struct.unpack(_HEADER_FORMAT, body[:HEADER_SIZE]))
    return header, body[HEADER_SIZE:]


def decode_frames(data: bytes) -> Iterator[Tuple[FrameHeader, bytes]]:
    """Decode back-to-back frames from a byte string."""
    offset = 0
    while offset < len(data):
        length = decode_length(data[offset:offset + LENGTH_SIZE])
        start = offset + LENGTH_SIZE
        body = data[start:start + length]
        if len(body) != length:
            raise ValueError("Truncated frame")
        yield decode_body(body)
        offset = start + length


def encode_handshake(rank: int, world_size: int) -> bytes:
    """Handshake frame announcing the sender's rank and the fabric size."""
    payload = HANDSHAKE_MAGIC + struct.pack(_HANDSHAKE_BODY, rank, world_size)
    return encode_frame(FrameHeader(rank, 0, HANDSHAKE_TAG, 0, 0, 1), payload)


def decode_handshake(header: FrameHeader, payload: bytes, expected_world_size: int) -> int:
    """Validate a handshake frame and return the peer rank.

    Raises:
        HandshakeError: wrong tag, bad magic, or a world size mismatch.
    """
    if header.tag != HANDSHAKE_TAG:
        raise HandshakeError(f"Expected handshake tag, got {header.tag:#x}")
    expected_length = len(HANDSHAKE_MAGIC) + struct.calcsize(_HANDSHAKE_BODY)
    if len(payload) != expected_length or not payload.startswith(HANDSHAKE_MAGIC):
        raise HandshakeError("Handshake payload has bad magic or length")
    rank, world_size = struct.unpack(_HANDSHAKE_BODY, payload[len(HANDSHAKE_MAGIC):])
    if world_size != expected_world_size:
        raise HandshakeError(f"Peer rank {rank} reports world size {world_size}, expected {expected_world_size}")
    if not 0 <= rank < expected_world_size:
        raise HandshakeError(f"Peer rank {rank} outside world size {expected_world_size}")
    return rank
