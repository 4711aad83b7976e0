"""Tests for the frame wire format."""

import struct

import pytest

from distflow.errors import FrameTooLarge, HandshakeError
from distflow.transport.framing import (
    HANDSHAKE_MAGIC,
    HANDSHAKE_TAG,
    HEADER_SIZE,
    LENGTH_SIZE,
    MAX_CHUNKS,
    Envelope,
    FrameHeader,
    counted_size,
    decode_frames,
    decode_handshake,
    decode_length,
    encode_envelope,
    encode_frame,
    encode_handshake,
    split_payload,
)

MiB = 1024 * 1024


class TestFrameLayout:
    """Test the exact byte layout of frames."""

    def test_header_sizes(self):
        """Test the fixed prefix and header sizes."""
        assert LENGTH_SIZE == 4
        assert HEADER_SIZE == 20

    def test_golden_frame(self):
        """Test the exact bytes of a small single-chunk envelope."""
        frames = encode_envelope(Envelope(1, 2, 0x10, 3, b"abc"), max_frame_size=64 * MiB)
        expected = bytes.fromhex(
            "17000000"  # length = 20 + 3
            "01000000"  # src_rank
            "02000000"  # dst_rank
            "10000000"  # tag
            "03000000"  # iteration
            "0000"      # chunk_index
            "0100"      # chunk_count
        ) + b"abc"
        assert frames == [expected]

    def test_decode_frames(self):
        """Test decoding back-to-back frames."""
        data = b"".join(encode_envelope(Envelope(4, 5, 7, 9, b"x" * 10), max_frame_size=4))
        decoded = list(decode_frames(data))
        assert [header.chunk_index for header, _ in decoded] == [0, 1, 2]
        assert all(header.chunk_count == 3 for header, _ in decoded)
        assert all(header.src_rank == 4 and header.dst_rank == 5 for header, _ in decoded)
        assert b"".join(payload for _, payload in decoded) == b"x" * 10

    def test_truncated_frame(self):
        """Test that a frame shorter than its length prefix is rejected."""
        frame = encode_frame(FrameHeader(0, 1, 2, 3, 0, 1), b"payload")
        with pytest.raises(ValueError, match="Truncated"):
            list(decode_frames(frame[:-1]))

    def test_length_shorter_than_header(self):
        """Test that a length below the header size is rejected."""
        with pytest.raises(ValueError):
            decode_length(struct.pack("<I", HEADER_SIZE - 1))


class TestCountedSize:
    """Test byte accounting of envelopes."""

    def test_single_chunk(self):
        """Test that a 100-byte payload counts 120 bytes."""
        assert counted_size(100, 64 * MiB) == 120

    def test_empty_payload_is_one_frame(self):
        """Test that an empty payload still costs one header."""
        assert counted_size(0, 64 * MiB) == HEADER_SIZE
        assert split_payload(b"", 16) == [b""]

    def test_chunked(self):
        """Test that every chunk carries its own header."""
        assert split_payload(b"x" * 100, 40) == [b"x" * 40, b"x" * 40, b"x" * 20]
        assert counted_size(100, 40) == 100 + 3 * HEADER_SIZE

    def test_counted_size_matches_encoding(self):
        """Test that counted bytes equal encoded bytes minus length prefixes."""
        for length, frame_size in [(0, 8), (1, 8), (8, 8), (9, 8), (1000, 64)]:
            frames = encode_envelope(Envelope(0, 1, 1, 0, b"y" * length), frame_size)
            assert sum(len(frame) - LENGTH_SIZE for frame in frames) == counted_size(length, frame_size)

    def test_too_many_chunks(self):
        """Test that a payload needing more than 65535 chunks is rejected."""
        with pytest.raises(FrameTooLarge):
            split_payload(b"z" * (MAX_CHUNKS + 1), 1)


class TestHandshake:
    """Test handshake frames."""

    def test_round_trip(self):
        """Test that a handshake announces the sender rank."""
        (header, payload), = decode_frames(encode_handshake(3, 8))
        assert header.tag == HANDSHAKE_TAG
        assert payload.startswith(HANDSHAKE_MAGIC)
        assert decode_handshake(header, payload, expected_world_size=8) == 3

    def test_world_size_mismatch(self):
        """Test that a peer disagreeing on the world size is rejected."""
        (header, payload), = decode_frames(encode_handshake(3, 8))
        with pytest.raises(HandshakeError, match="world size"):
            decode_handshake(header, payload, expected_world_size=4)

    def test_bad_magic(self):
        """Test that a wrong magic is rejected."""
        (header, payload), = decode_frames(encode_handshake(1, 2))
        with pytest.raises(HandshakeError):
            decode_handshake(header, b"XXXXXX" + payload[len(HANDSHAKE_MAGIC):], expected_world_size=2)

    def test_wrong_tag(self):
        """Test that a data frame is not a handshake."""
        header = FrameHeader(1, 0, 5, 0, 0, 1)
        with pytest.raises(HandshakeError, match="tag"):
            decode_handshake(header, b"", expected_world_size=2)
