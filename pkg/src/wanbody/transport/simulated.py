"""Deterministic simulated wide-area network on virtual clocks.

Each site owns a :class:`VirtualClock`.  A message sent at virtual time
``t`` arrives at ``t + latency/2 + bytes/bandwidth``, where for a path
through relays the one-way latencies add and the bandwidth is that of the
slowest hop.  A blocking paired exchange completes on both sides at
``max(start_a, start_b) + round_trip + max(bytes_a, bytes_b)/bandwidth``.
Payloads travel as the same striped frames used on real sockets.
"""

from __future__ import annotations

import math
import queue
import threading
from dataclasses import dataclass, field

from .base import Channel, ExchangeTiming
from .config import ChannelConfig, TransportError
from .frame import decode_frames, encode_frames


class VirtualClock:
    kind = "virtual"

    def __init__(self, start: float = 0.0):
        self._t = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        return self._t

    def advance_to(self, t: float) -> float:
        with self._lock:
            if t > self._t:
                self._t = t
            return self._t

    def advance(self, dt: float) -> float:
        if dt < 0:
            raise ValueError("cannot move a clock backwards")
        with self._lock:
            self._t += dt
            return self._t


@dataclass
class Envelope:
    kind: str  # "msg" or "xchg"
    depart: float
    frames: list
    size: int
    latency: float  # accumulated one-way latency along the path
    bandwidth: float  # bottleneck bandwidth along the path
    chunk: int

    @property
    def arrival(self) -> float:
        return self.depart + self.latency + self.size / self.bandwidth


_CLOSE = object()


@dataclass
class _Port:
    inbox: "queue.Queue" = field(default_factory=queue.Queue)


class SimChannel(Channel):
    """One end of a simulated link."""

    def __init__(self, config: ChannelConfig, clock: VirtualClock, channel_id: int = 0):
        if config.backend != "simulated":
            config = config.with_(backend="simulated")
        self.config = config
        self.clock = clock
        self.channel_id = channel_id
        self.port = _Port()
        self.peer: _Port | None = None
        self.bytes_sent = 0
        self.bytes_received = 0
        self.last_exchange = None
        self.closed = False

    # the hop a message takes when it leaves this end
    def _envelope(self, kind: str, payload) -> Envelope:
        frames = encode_frames(payload, self.channel_id, self.config.send_chunk, self.config.streams)
        return Envelope(
            kind,
            self.clock.now(),
            frames,
            len(payload),
            0.5 * self.config.latency,
            self.config.bandwidth,
            self.config.send_chunk,
        )

    def _post(self, env: Envelope):
        if self.closed or self.peer is None:
            raise TransportError("channel is closed")
        self.peer.inbox.put(env)
        self.bytes_sent += env.size

    def _take(self, kind: str) -> tuple[Envelope, bytes]:
        try:
            env = self.port.inbox.get(timeout=self.config.timeout)
        except queue.Empty:
            raise TransportError(f"timed out after {self.config.timeout} s waiting for peer") from None
        if env is _CLOSE:
            raise TransportError("peer closed the channel")
        if env.kind != kind:
            raise TransportError(f"expected {kind!r} message, got {env.kind!r}")
        data = decode_frames(env.frames, self.channel_id, env.chunk)
        self.bytes_received += len(data)
        return env, data

    def send_message(self, payload) -> None:
        env = self._envelope("msg", payload)
        self._post(env)
        # the sender is busy for the injection time
        if env.size:
            self.clock.advance(env.size / self.config.bandwidth)

    def recv_message(self) -> bytes:
        env, data = self._take("msg")
        self.clock.advance_to(env.arrival)
        return data

    def begin_exchange(self, payload) -> Envelope:
        """Post this side of a paired exchange without waiting."""
        mine = self._envelope("xchg", payload)
        self._post(mine)
        return mine

    def finish_exchange(self, mine: Envelope) -> bytes:
        """Wait for the peer's half; completes at ``max(now, peer start) + rtt + transfer``."""
        start = self.clock.now()
        env, data = self._take("xchg")
        rtt = 2.0 * env.latency
        bw = min(env.bandwidth, self.config.bandwidth)
        transfer = max(mine.size, env.size) / bw
        done = max(start, env.depart) + rtt + transfer
        self.clock.advance_to(done)
        self.last_exchange = ExchangeTiming(mine.size, env.size, rtt, transfer, done - start)
        return data

    def exchange(self, payload) -> bytes:
        return self.finish_exchange(self.begin_exchange(payload))

    def begin_shift(self, payload) -> Envelope:
        """Send the outgoing half of a ring hop (this end is the sender)."""
        mine = self._envelope("shift", payload)
        self._post(mine)
        return mine

    def finish_shift(self, sent: Envelope, sent_on: "SimChannel") -> bytes:
        """Receive the incoming half of a ring hop on this end.

        The hop completes once the incoming message has arrived and been
        acknowledged and the outgoing one (on ``sent_on``) has been
        acknowledged too.
        """
        start = self.clock.now()
        env, data = self._take("shift")
        out_cfg = sent_on.config
        own_done = sent.depart + out_cfg.latency + sent.size / out_cfg.bandwidth
        done = max(own_done, env.arrival + env.latency)
        self.clock.advance_to(done)
        bw = min(env.bandwidth, out_cfg.bandwidth)
        rtt = max(out_cfg.latency, 2.0 * env.latency)
        self.last_exchange = ExchangeTiming(sent.size, env.size, rtt, max(sent.size, env.size) / bw, done - start)
        return data

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            if self.peer is not None:
                self.peer.inbox.put(_CLOSE)


def sim_pair(
    config: ChannelConfig,
    clock_a: VirtualClock | None = None,
    clock_b: VirtualClock | None = None,
    channel_id: int = 0,
) -> tuple[SimChannel, SimChannel]:
    """Two connected ends of one simulated link."""
    a = SimChannel(config, clock_a or VirtualClock(), channel_id)
    b = SimChannel(config, clock_b or VirtualClock(), channel_id)
    a.peer, b.peer = b.port, a.port
    return a, b


class SimRelay:
    """Forwarder joining two simulated links.

    Messages arriving on ``upstream`` continue on ``downstream`` (and back),
    gaining the next hop's one-way latency and bottleneck bandwidth.  The
    relay's own ends are never read by user code.
    """

    def __init__(self, upstream: SimChannel, downstream: SimChannel):
        self.up = upstream
        self.down = downstream
        self._threads = [
            threading.Thread(target=self._pump, args=(self.up, self.down), daemon=True),
            threading.Thread(target=self._pump, args=(self.down, self.up), daemon=True),
        ]
        for t in self._threads:
            t.start()

    @staticmethod
    def _pump(src: SimChannel, dst: SimChannel):
        while True:
            env = src.port.inbox.get()
            if env is _CLOSE:
                if dst.peer is not None:
                    dst.peer.inbox.put(_CLOSE)
                return
            env.latency += 0.5 * dst.config.latency
            env.bandwidth = min(env.bandwidth, dst.config.bandwidth)
            dst.peer.inbox.put(env)

    def close(self):
        self.up.port.inbox.put(_CLOSE)
        self.down.port.inbox.put(_CLOSE)


def sim_chain(
    hops: list[ChannelConfig],
    clock_a: VirtualClock | None = None,
    clock_b: VirtualClock | None = None,
    channel_id: int = 0,
) -> tuple[SimChannel, SimChannel, list[SimRelay]]:
    """End points of a path through ``len(hops) - 1`` relays."""
    if not hops:
        raise ValueError("at least one hop required")
    a, first = sim_pair(hops[0], clock_a, VirtualClock(), channel_id)
    relays = []
    prev = first
    for cfg in hops[1:]:
        r_up, nxt = sim_pair(cfg, VirtualClock(), VirtualClock(), channel_id)
        relays.append(SimRelay(prev, r_up))
        prev = nxt
    prev.clock = clock_b or VirtualClock()
    return a, prev, relays


def path_delivery_time(hops: list[ChannelConfig], n_bytes: int) -> float:
    """One-way time through a chain: summed half round trips plus bottleneck transfer."""
    return sum(0.5 * h.latency for h in hops) + n_bytes / min(h.bandwidth for h in hops) if hops else math.nan
