"""Collective operations built on point-to-point fabric messages."""

import zlib
from typing import List, Optional, Sequence

from ..errors import RecvTimeout
from .fabric import Fabric
from .framing import HANDSHAKE_TAG, TAG_LOAD, TAG_METRICS, Envelope

__all__ = ["TAG_LOAD", "TAG_METRICS", "all_to_all", "gather_to", "scatter_from", "stage_tag"]


def stage_tag(purpose: str, stage_id: str, detail: int = 0) -> int:
    """Stable tag for a (purpose, stage) pair; never collides with the handshake tag."""
    tag = zlib.crc32(f"{purpose}/{stage_id}/{detail}".encode("utf-8")) | 0x1000_0000
    return tag if tag != HANDSHAKE_TAG else tag - 1


def all_to_all(
    fabric: Fabric,
    rank: int,
    participants: Sequence[int],
    outgoing: Sequence[bytes],
    tag: int,
    iteration: int,
    timeout: Optional[float] = None,
) -> List[bytes]:
    """Exchange one payload with every participant, self included.

    `outgoing[j]` goes to `participants[j]`. The result lists the payloads
    received, ordered by source index; the self payload never touches the wire.
    """
    participants = list(participants)
    if rank not in participants:
        raise ValueError(f"Rank {rank} is not an all-to-all participant")
    if len(outgoing) != len(participants):
        raise ValueError(f"Expected {len(participants)} outgoing payloads, got {len(outgoing)}")

    me = participants.index(rank)
    for index, dst in enumerate(participants):
        if dst != rank:
            fabric.send(Envelope(rank, dst, tag, iteration, outgoing[index]))

    received: List[bytes] = []
    for index, src in enumerate(participants):
        if src == rank:
            received.append(outgoing[me])
        else:
            received.append(fabric.recv(rank, tag, iteration, src=src, timeout=timeout).payload)
    return received


def gather_to(
    fabric: Fabric,
    rank: int,
    root: int,
    payload: bytes,
    tag: int,
    iteration: int,
    participants: Optional[Sequence[int]] = None,
    timeout: Optional[float] = None,
) -> Optional[List[bytes]]:
    """All-to-one: the root returns payloads ordered by participant, others return None.

    Raises:
        RecvTimeout: at the root, naming every participant that did not report.
    """
    ranks = list(range(fabric.topology.world_size)) if participants is None else list(participants)
    if rank != root:
        fabric.send(Envelope(rank, root, tag, iteration, payload))
        return None

    gathered: List[bytes] = []
    missing: List[int] = []
    for src in ranks:
        if src == root:
            gathered.append(payload)
            continue
        try:
            gathered.append(fabric.recv(root, tag, iteration, src=src, timeout=timeout).payload)
        except RecvTimeout:
            missing.append(src)
            gathered.append(b"")
            timeout = 0.0
    if missing:
        error = RecvTimeout(f"Gather at rank {root} missing ranks {missing}")
        error.missing_ranks = missing
        raise error
    return gathered


def scatter_from(
    fabric: Fabric,
    rank: int,
    root: int,
    parts: Optional[Sequence[bytes]],
    tag: int,
    iteration: int,
    participants: Optional[Sequence[int]] = None,
    timeout: Optional[float] = None,
) -> bytes:
    """One-to-all: participant i receives parts[i] from the root."""
    ranks = list(range(fabric.topology.world_size)) if participants is None else list(participants)
    if rank == root:
        if parts is None or len(parts) != len(ranks):
            raise ValueError(f"Scatter needs exactly {len(ranks)} parts")
        own = b""
        for index, dst in enumerate(ranks):
            if dst == root:
                own = parts[index]
            else:
                fabric.send(Envelope(root, dst, tag, iteration, parts[index]))
        return own
    return fabric.recv(rank, tag, iteration, src=root, timeout=timeout).payload
