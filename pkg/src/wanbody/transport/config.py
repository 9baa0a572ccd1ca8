"""Channel configuration and named tuning profiles."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

BACKENDS = ("simulated", "tcp")


class TransportError(RuntimeError):
    """Message-level transport failure; no partial payload is ever returned."""


@dataclass(frozen=True)
class ChannelConfig:
    """Settings of one point-to-point channel.

    ``latency`` is the round-trip time and ``bandwidth`` the throughput in
    bytes/second of the simulated backend.  ``pacing_rate`` limits the
    aggregate injection rate of all streams (None means unlimited).
    """

    backend: str = "simulated"
    streams: int = 1
    send_chunk: int = 256 * 1024
    recv_chunk: int = 256 * 1024
    pacing_rate: float | None = None
    buffer_size: int = 0
    latency: float = 0.0
    bandwidth: float = math.inf
    timeout: float = 60.0

    def __post_init__(self):
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.streams < 1 or self.streams > 0xFFFF:
            raise ValueError(f"streams must be in [1, 65535], got {self.streams}")
        if self.send_chunk < 1 or self.recv_chunk < 1:
            raise ValueError("chunk sizes must be >= 1 byte")
        if self.pacing_rate is not None and not self.pacing_rate > 0:
            raise ValueError("pacing_rate must be positive or None")
        if self.buffer_size < 0:
            raise ValueError("buffer_size must be >= 0")
        if self.backend == "simulated":
            if self.latency < 0:
                raise ValueError("latency must be >= 0")
            if not self.bandwidth > 0:
                raise ValueError("bandwidth must be positive")

    def with_(self, **changes) -> ChannelConfig:
        return replace(self, **changes)


PROFILES = {
    # dedicated light path: many small chunks, 100 MB/s per stream burst limit
    "lightpath": ChannelConfig(backend="tcp", streams=64, send_chunk=8 * 1024, recv_chunk=8 * 1024, pacing_rate=64 * 100e6),
    # shared research network: fewer, larger chunks, no pacing
    "shared-wan": ChannelConfig(backend="tcp", streams=16, send_chunk=256 * 1024, recv_chunk=256 * 1024),
}


def profile(name: str, **overrides) -> ChannelConfig:
    try:
        base = PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}") from None
    return replace(base, **overrides)


def simulated_delivery_time(config: ChannelConfig, n_bytes: int) -> float:
    """One-way delivery time ``latency / 2 + n_bytes / bandwidth``."""
    return 0.5 * config.latency + n_bytes / config.bandwidth
