"""Per-step exchange accounting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

from ..perfmodel.model import wan_exchange_count

PHASES = ("mesh", "samples", "let", "migration")


def plan_step_exchanges(s: int) -> int:
    """Blocking wide-area exchanges per step: 0 for one site, else 5(s-1) + 8."""
    return wan_exchange_count(s)


@dataclass
class PhaseStats:
    bytes_sent: int = 0
    bytes_received: int = 0
    seconds: float = 0.0
    latency: float = 0.0
    bandwidth: float = 0.0
    exchanges: int = 0

    def add(self, timing):
        self.bytes_sent += timing.sent
        self.bytes_received += timing.received
        self.seconds += timing.seconds
        self.latency += timing.latency
        self.bandwidth += timing.bandwidth
        self.exchanges += 1


@dataclass
class ExchangeStats:
    """Counters for one site over one step.

    ``wan_exchanges`` counts blocking exchanges on wide-area links (the
    quantity the step-time model calls ``5s + 3``); ``let_exchanges`` and
    ``migration_exchanges`` count logical neighbour exchanges.
    ``gathered`` holds, per gathered item, the bytes a site ends up holding
    (its own contribution plus everything received).
    """

    phases: dict[str, PhaseStats] = field(default_factory=lambda: {p: PhaseStats() for p in PHASES})
    gathered: dict[str, int] = field(default_factory=dict)
    wan_exchanges: int = 0
    lan_exchanges: int = 0
    let_exchanges: int = 0
    migration_exchanges: int = 0
    let_bytes: int = 0

    def record(self, phase: str, timing, wan: bool):
        self.phases[phase].add(timing)
        if wan:
            self.wan_exchanges += 1
        else:
            self.lan_exchanges += 1

    def gather(self, item: str, nbytes: int):
        self.gathered[item] = self.gathered.get(item, 0) + int(nbytes)

    @property
    def seconds(self) -> float:
        return sum(p.seconds for p in self.phases.values())

    @property
    def latency(self) -> float:
        return sum(p.latency for p in self.phases.values())

    @property
    def bandwidth(self) -> float:
        return sum(p.bandwidth for p in self.phases.values())

    def reset(self):
        fresh = ExchangeStats()
        self.__dict__.update(fresh.__dict__)


STATS_COLUMNS = ("step", "phase", "bytes", "seconds")


def write_stats_csv(fh, rows) -> None:
    """``rows`` is an iterable of ``(step, ExchangeStats)``; one line per phase."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(STATS_COLUMNS)
    for step, st in rows:
        for name in PHASES:
            ph = st.phases[name]
            w.writerow([step, name, ph.bytes_sent + ph.bytes_received, repr(ph.seconds)])
