"""Interface shared by the simulated and TCP channels."""

from __future__ import annotations

import time
from dataclasses import dataclass


@dataclass(frozen=True)
class ExchangeTiming:
    """Cost of one blocking paired exchange.

    ``latency`` and ``bandwidth`` are the analytic parts (round-trip time
    and ``max(sent, received) / bandwidth``) on the simulated backend;
    ``seconds`` is elapsed time on the channel's clock, including waiting
    for a late peer.
    """

    sent: int
    received: int
    latency: float
    bandwidth: float
    seconds: float


class WallClock:
    """Clock of real-socket channels."""

    kind = "wall"

    def now(self) -> float:
        return time.perf_counter()


class Channel:
    """Bidirectional message channel to one peer."""

    clock = None
    last_exchange: ExchangeTiming | None = None

    def send_message(self, payload) -> None:
        raise NotImplementedError

    def recv_message(self) -> bytes:
        raise NotImplementedError

    def exchange(self, payload) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
