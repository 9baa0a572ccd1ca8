"""Wire framing: each stream carries one header plus its round-robin slice.

Header (little-endian, 22 bytes): magic ``SUWP``, version u16, channel id
u32, message length u64, stream index u16, stream count u16.  An error
frame uses magic ``SUWE`` and carries a UTF-8 reason as its payload.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

from .config import TransportError

MAGIC = b"SUWP"
ERROR_MAGIC = b"SUWE"
VERSION = 1
HEADER = struct.Struct("<4sHIQHH")


@dataclass(frozen=True)
class FrameHeader:
    channel_id: int
    length: int
    stream_index: int
    stream_count: int
    magic: bytes = MAGIC
    version: int = VERSION

    def pack(self) -> bytes:
        return HEADER.pack(self.magic, self.version, self.channel_id, self.length, self.stream_index, self.stream_count)

    @property
    def is_error(self) -> bool:
        return self.magic == ERROR_MAGIC


def unpack_header(raw: bytes) -> FrameHeader:
    if len(raw) != HEADER.size:
        raise TransportError(f"short frame header ({len(raw)} bytes)")
    magic, version, cid, length, idx, count = HEADER.unpack(raw)
    if magic not in (MAGIC, ERROR_MAGIC):
        raise TransportError(f"bad frame magic {magic!r}")
    if version != VERSION:
        raise TransportError(f"unsupported frame version {version}")
    if magic == MAGIC and not idx < count:
        raise TransportError(f"stream index {idx} >= stream count {count}")
    return FrameHeader(cid, length, idx, count, magic, version)


def error_frame(reason: str, channel_id: int = 0) -> bytes:
    text = reason.encode("utf-8")
    return FrameHeader(channel_id, len(text), 0, 1, ERROR_MAGIC).pack() + text


def slice_length(length: int, chunk: int, streams: int, index: int) -> int:
    """Bytes of a ``length``-byte message carried by stream ``index``."""
    full, rest = divmod(length, chunk)
    n = full // streams + (1 if index < full % streams else 0)
    size = n * chunk
    if rest and full % streams == index:
        size += rest
    return size


def split_message(payload, chunk: int, streams: int) -> list[bytes]:
    """Stripe ``payload`` round-robin over ``streams`` in ``chunk``-byte units."""
    view = memoryview(payload).cast("B")
    parts: list[list] = [[] for _ in range(streams)]
    for j, off in enumerate(range(0, len(view), chunk)):
        parts[j % streams].append(view[off : off + chunk])
    return [b"".join(p) for p in parts]


def join_slices(slices, length: int, chunk: int, streams: int) -> bytes:
    """Inverse of :func:`split_message`; validates every slice length."""
    if len(slices) != streams:
        raise TransportError(f"expected {streams} slices, got {len(slices)}")
    for i, s in enumerate(slices):
        want = slice_length(length, chunk, streams, i)
        if len(s) != want:
            raise TransportError(f"stream {i} carried {len(s)} bytes, expected {want}")
    out = bytearray(length)
    views = [memoryview(s) for s in slices]
    for j, off in enumerate(range(0, length, chunk)):
        k = j // streams
        piece = views[j % streams][k * chunk : k * chunk + chunk]
        out[off : off + len(piece)] = piece
    return bytes(out)


def encode_frames(payload, channel_id: int, chunk: int, streams: int) -> list[bytes]:
    """Header plus slice for every stream."""
    n = len(payload)
    return [
        FrameHeader(channel_id, n, i, streams).pack() + s for i, s in enumerate(split_message(payload, chunk, streams))
    ]


def decode_frames(frames, channel_id: int | None, chunk: int) -> bytes:
    heads = [unpack_header(f[: HEADER.size]) for f in frames]
    for h, f in zip(heads, frames):
        if h.is_error:
            raise TransportError("peer reported: " + f[HEADER.size :].decode("utf-8", "replace"))
    streams = len(frames)
    length = heads[0].length
    for i, h in enumerate(heads):
        if h.stream_index != i or h.stream_count != streams or h.length != length:
            raise TransportError(f"inconsistent header on stream {i}")
        if channel_id is not None and h.channel_id != channel_id:
            raise TransportError(f"frame for channel {h.channel_id} arrived on channel {channel_id}")
    return join_slices([f[HEADER.size :] for f in frames], length, chunk, streams)
