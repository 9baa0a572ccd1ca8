"""The four per-step communication phases over a ring of sites.

Every site is joined to its right neighbour by one channel, so site ``i``
talks to ``i - 1`` on its ``left`` channel and to ``i + 1`` on its
``right`` channel.  With two sites both channels lead to the same peer.
Gathers take ``s - 1`` hops, each forwarding to the right the block
received from the left in the previous hop.  Neighbour exchanges send a
fixed-size header first and then the payload, on both links.
"""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from ..decomposition.slabs import SampleSet
from ..nbody.particles import RECORD_DTYPE, ParticleSet
from ..transport.config import TransportError
from .stats import ExchangeStats


class ProtocolError(RuntimeError):
    """A phase failed; ``phase`` names it."""

    def __init__(self, phase: str, message: str):
        super().__init__(f"[{phase}] {message}")
        self.phase = phase


@dataclass
class SiteEndpoint:
    """A site's place in the ring and its two neighbour channels.

    ``wan`` marks the links as wide-area for accounting.  A ring of one has
    no channels and every operation is local.
    """

    index: int
    s: int
    left: object = None
    right: object = None
    wan: bool = True
    stats: ExchangeStats = field(default_factory=ExchangeStats)

    def __post_init__(self):
        if not 0 <= self.index < self.s:
            raise ValueError("site index out of range")
        if self.s > 1 and (self.left is None or self.right is None):
            raise ValueError("a ring of two or more sites needs both neighbour channels")

    @property
    def clock(self):
        return None if self.right is None else self.right.clock


def _guard(phase: str, fn, *args):
    try:
        return fn(*args)
    except TransportError as exc:
        raise ProtocolError(phase, str(exc)) from exc


# ------------------------------------------------------------------ gathers


def ring_allgather(ep: SiteEndpoint, payload: bytes, phase: str, item: str) -> list[bytes]:
    """Every site's payload, ordered by site index, after ``s - 1`` hops."""
    s, i = ep.s, ep.index
    blocks: list[bytes | None] = [None] * s
    blocks[i] = bytes(payload)
    outgoing = blocks[i]
    for hop in range(s - 1):
        token = _guard(phase, ep.right.begin_shift, outgoing)
        incoming = _guard(phase, ep.left.finish_shift, token, ep.right)
        ep.stats.record(phase, ep.left.last_exchange, ep.wan)
        src = (i - hop - 1) % s
        blocks[src] = incoming
        outgoing = incoming
    ep.stats.gather(item, sum(len(b) for b in blocks))
    return blocks


def ring_reduce_mesh(ep: SiteEndpoint, local_density: np.ndarray, aux) -> tuple[np.ndarray, np.ndarray]:
    """Sum of all sites' densities plus every site's auxiliary scalars.

    Densities travel as float32 (one float per cell); the sum is formed in
    float64 in site order, so every site obtains the same bits.  ``aux`` is
    gathered unreduced and returned as an ``(s, k)`` array.
    """
    aux = np.asarray(aux, dtype=np.float64).ravel()
    if ep.s == 1:
        ep.stats.gather("mesh_density", 4 * local_density.size)
        ep.stats.gather("aux", aux.nbytes)
        return local_density, aux[None, :]
    shape = local_density.shape
    blocks = ring_allgather(ep, np.ascontiguousarray(local_density, dtype="<f4").tobytes(), "mesh", "mesh_density")
    total = np.zeros(shape)
    for k, b in enumerate(blocks):
        if len(b) != 4 * local_density.size:
            raise ProtocolError("mesh", f"site {k} sent {len(b)} bytes, expected a mesh of {local_density.size} cells")
        total += np.frombuffer(b, dtype="<f4").reshape(shape)
    aux_blocks = ring_allgather(ep, aux.astype("<f8").tobytes(), "mesh", "aux")
    if len({len(b) for b in aux_blocks}) != 1:
        raise ProtocolError("mesh", "sites disagree on the number of auxiliary scalars")
    return total, np.stack([np.frombuffer(b, dtype="<f8") for b in aux_blocks])


def ring_gather_samples(ep: SiteEndpoint, local: SampleSet) -> SampleSet:
    """Concatenation of all sites' samples in site order (x as float32)."""
    if ep.s == 1:
        ep.stats.gather("samples", 4 * len(local))
        return SampleSet(local.x.copy(), local.r_samp)
    counts = ring_allgather(ep, struct.pack("<q", len(local)), "samples", "sample_counts")
    blocks = ring_allgather(ep, local.x.astype("<f4").tobytes(), "samples", "samples")
    for k, (c, b) in enumerate(zip(counts, blocks)):
        if struct.unpack("<q", c)[0] * 4 != len(b):
            raise ProtocolError("samples", f"site {k} announced {struct.unpack('<q', c)[0]} samples but sent {len(b)} bytes")
    x = np.concatenate([np.frombuffer(b, dtype="<f4") for b in blocks]).astype(np.float64)
    return SampleSet(x, local.r_samp)


def ring_gather_counts(ep: SiteEndpoint, n_local: int) -> np.ndarray:
    """Particle count of every site (used after migration)."""
    if ep.s == 1:
        return np.array([n_local])
    blocks = ring_allgather(ep, struct.pack("<q", int(n_local)), "migration", "counts")
    return np.array([struct.unpack("<q", b)[0] for b in blocks])


# ------------------------------------------------------------------ neighbour exchanges

_LEN = struct.Struct("<Q")


def _both_links(ep: SiteEndpoint, phase: str, left_payload: bytes, right_payload: bytes) -> tuple[bytes, bytes]:
    """Header then payload on the left link, then on the right link.

    Both halves of each link are posted before waiting, so the ring cannot
    deadlock.  Four blocking exchanges are recorded.
    """
    tl = _guard(phase, ep.left.begin_exchange, _LEN.pack(len(left_payload)))
    tr = _guard(phase, ep.right.begin_exchange, _LEN.pack(len(right_payload)))
    hl = _guard(phase, ep.left.finish_exchange, tl)
    ep.stats.record(phase, ep.left.last_exchange, ep.wan)
    hr = _guard(phase, ep.right.finish_exchange, tr)
    ep.stats.record(phase, ep.right.last_exchange, ep.wan)
    tl = _guard(phase, ep.left.begin_exchange, left_payload)
    tr = _guard(phase, ep.right.begin_exchange, right_payload)
    from_left = _guard(phase, ep.left.finish_exchange, tl)
    ep.stats.record(phase, ep.left.last_exchange, ep.wan)
    from_right = _guard(phase, ep.right.finish_exchange, tr)
    ep.stats.record(phase, ep.right.last_exchange, ep.wan)
    for name, head, body in (("left", hl, from_left), ("right", hr, from_right)):
        if len(head) != _LEN.size or _LEN.unpack(head)[0] != len(body):
            raise ProtocolError(phase, f"{name} neighbour announced {_LEN.unpack(head)[0] if len(head) == _LEN.size else '?'} bytes, delivered {len(body)}")
    return from_left, from_right


def exchange_let(ep: SiteEndpoint, left_export: bytes, right_export: bytes) -> tuple[bytes, bytes]:
    """Swap local essential trees with both neighbours.

    With two sites the neighbours coincide: ``right_export`` is sent once on
    the right link and the left link carries an empty message, so the
    logical count is one exchange.
    """
    if ep.s == 1:
        return b"", b""
    if ep.s == 2:
        left_export = b""
    from_left, from_right = _both_links(ep, "let", left_export, right_export)
    ep.stats.let_exchanges += 1 if ep.s == 2 else 2
    ep.stats.let_bytes += len(left_export) + len(right_export)
    return from_left, from_right


def _pack_particles(p: ParticleSet) -> bytes:
    return p.to_records().tobytes()


def _unpack_particles(data: bytes, box: float, periodic: bool) -> ParticleSet:
    if len(data) % RECORD_DTYPE.itemsize:
        raise ProtocolError("migration", f"particle payload of {len(data)} bytes is not a whole number of records")
    rec = np.frombuffer(data, dtype=RECORD_DTYPE)
    return ParticleSet.from_records(rec, box, periodic)


def migrate_particles(ep: SiteEndpoint, to_left: ParticleSet, to_right: ParticleSet) -> ParticleSet:
    """Send migrants to the neighbours; returns arrivals (from the left first)."""
    if ep.s == 1:
        return ParticleSet.concat([to_left, to_right])
    from_left, from_right = _both_links(ep, "migration", _pack_particles(to_left), _pack_particles(to_right))
    ep.stats.migration_exchanges += 1 if ep.s == 2 else 2
    box, periodic = to_left.box, to_left.periodic
    return ParticleSet.concat([_unpack_particles(from_left, box, periodic), _unpack_particles(from_right, box, periodic)], box, periodic)


# ------------------------------------------------------------------ chunking

_CHUNK_HEAD = struct.Struct("<QQ")  # total length, offset


def chunked_exchange(channel, payload: bytes, memory_cap: int) -> tuple[bytes, int]:
    """Exchange ``payload`` in pieces of at most ``memory_cap`` bytes.

    Both sides run as many rounds as the longer message needs; a zero-length
    payload still costs one round.  Returns the peer's reassembled payload
    and the number of sub-exchanges performed.
    """
    if memory_cap < 1:
        raise ValueError("memory_cap must be >= 1")
    payload = bytes(payload)
    mine = max(1, math.ceil(len(payload) / memory_cap))
    out = bytearray()
    total = None
    rounds = 0
    k = 0
    while True:
        off = k * memory_cap
        piece = payload[off : off + memory_cap] if k < mine else b""
        msg = channel.exchange(_CHUNK_HEAD.pack(len(payload), off) + piece)
        rounds += 1
        if len(msg) < _CHUNK_HEAD.size:
            raise ProtocolError("chunked", "sub-exchange without header")
        peer_total, peer_off = _CHUNK_HEAD.unpack_from(msg)
        body = msg[_CHUNK_HEAD.size :]
        if total is None:
            total = peer_total
        elif peer_total != total:
            raise ProtocolError("chunked", "peer changed the announced length mid-transfer")
        if body:
            if peer_off != len(out):
                raise ProtocolError("chunked", f"piece at offset {peer_off}, expected {len(out)}")
            out += body
        k += 1
        peer_rounds = max(1, math.ceil(total / memory_cap))
        if k >= max(mine, peer_rounds):
            break
    if len(out) != total:
        raise ProtocolError("chunked", f"reassembled {len(out)} bytes, announced {total}")
    return bytes(out), rounds


def digest(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()
