"""Latency and throughput measurement between two channel ends."""

from __future__ import annotations

import csv
import statistics
from dataclasses import dataclass, field

CSV_COLUMNS = ("size", "seconds", "bytes_per_second")


@dataclass
class NetbenchResult:
    rtt: float
    rows: list[tuple[int, float, float]] = field(default_factory=list)
    clock: str = "virtual"

    def throughput(self, size: int) -> float:
        for s, _, r in self.rows:
            if s == size:
                return r
        raise KeyError(size)


def netbench(channel, sizes, repetitions: int = 3) -> NetbenchResult:
    """Ping with empty messages, then time ``size``-byte sends acknowledged by
    an empty reply.  Throughput is ``size / (elapsed - rtt)``.

    The peer must run :func:`netbench_responder` with the same arguments.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    clock = channel.clock
    rtts = []
    for _ in range(repetitions):
        t0 = clock.now()
        channel.send_message(b"")
        channel.recv_message()
        rtts.append(clock.now() - t0)
    rtt = min(rtts)
    rows = []
    for size in sizes:
        payload = bytes(size)
        times = []
        for _ in range(repetitions):
            t0 = clock.now()
            channel.send_message(payload)
            channel.recv_message()
            times.append(clock.now() - t0)
        elapsed = statistics.median(times)
        transfer = elapsed - rtt
        rate = size / transfer if transfer > 0 else float("inf")
        rows.append((int(size), elapsed, rate))
    return NetbenchResult(rtt, rows, getattr(clock, "kind", "wall"))


def netbench_responder(channel, sizes, repetitions: int = 3) -> None:
    for _ in range(repetitions * (1 + len(list(sizes)))):
        channel.recv_message()
        channel.send_message(b"")


def write_netbench_csv(result: NetbenchResult, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for size, seconds, rate in result.rows:
        w.writerow([size, repr(seconds), repr(rate)])
