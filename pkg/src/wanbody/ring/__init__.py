"""Ring communication protocol between sites."""

from .protocol import (
    ProtocolError,
    SiteEndpoint,
    chunked_exchange,
    exchange_let,
    migrate_particles,
    ring_allgather,
    ring_gather_counts,
    ring_gather_samples,
    ring_reduce_mesh,
)
from .ring import build_ring, close_ring
from .stats import PHASES, ExchangeStats, PhaseStats, plan_step_exchanges, write_stats_csv

__all__ = [
    "PHASES",
    "ExchangeStats",
    "PhaseStats",
    "ProtocolError",
    "SiteEndpoint",
    "build_ring",
    "close_ring",
    "chunked_exchange",
    "exchange_let",
    "migrate_particles",
    "plan_step_exchanges",
    "ring_allgather",
    "ring_gather_counts",
    "ring_gather_samples",
    "ring_reduce_mesh",
    "write_stats_csv",
]
