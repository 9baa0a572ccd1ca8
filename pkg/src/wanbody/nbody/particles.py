"""Particle container and snapshot I/O."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

SNAPSHOT_MAGIC = b"SNBK"
SNAPSHOT_VERSION = 1
_HEADER = struct.Struct("<4sIQdd")
RECORD_DTYPE = np.dtype([("id", "<u8"), ("mass", "<f8"), ("pos", "<f8", (3,)), ("vel", "<f8", (3,))])


class SnapshotError(ValueError):
    pass


@dataclass
class ParticleSet:
    """Positions, velocities, masses and stable ids of a particle set.

    With ``periodic`` set, positions are wrapped into ``[0, box)`` on
    construction.  Isolated sets (stellar tests, two-body orbits) keep raw
    coordinates.
    """

    pos: np.ndarray
    vel: np.ndarray
    mass: np.ndarray
    ids: np.ndarray
    box: float = 1.0
    periodic: bool = True

    def __post_init__(self):
        self.pos = np.array(self.pos, dtype=np.float64).reshape(-1, 3)
        n = len(self.pos)
        self.vel = np.array(self.vel, dtype=np.float64).reshape(n, 3)
        self.mass = np.array(self.mass, dtype=np.float64).reshape(n)
        self.ids = np.array(self.ids, dtype=np.int64).reshape(n)
        if not self.box > 0:
            raise ValueError("box must be positive")
        if n and not np.all(self.mass > 0):
            raise ValueError("masses must be positive")
        if len(np.unique(self.ids)) != n:
            raise ValueError("particle ids must be unique")
        if self.periodic:
            self.wrap()

    @classmethod
    def empty(cls, box: float = 1.0, periodic: bool = True) -> ParticleSet:
        return cls(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=np.int64), box, periodic)

    def __len__(self) -> int:
        return len(self.mass)

    def wrap(self):
        self.pos = np.mod(self.pos, self.box)
        # mod can round up to exactly box for tiny negative inputs
        self.pos[self.pos >= self.box] = 0.0

    def copy(self) -> ParticleSet:
        return ParticleSet(self.pos.copy(), self.vel.copy(), self.mass.copy(), self.ids.copy(), self.box, self.periodic)

    def subset(self, index) -> ParticleSet:
        return ParticleSet(self.pos[index], self.vel[index], self.mass[index], self.ids[index], self.box, self.periodic)

    def sorted_by_id(self) -> ParticleSet:
        return self.subset(np.argsort(self.ids, kind="stable"))

    @staticmethod
    def concat(sets, box: float | None = None, periodic: bool | None = None) -> ParticleSet:
        sets = list(sets)
        if not sets:
            return ParticleSet.empty(box or 1.0, True if periodic is None else periodic)
        box = sets[0].box if box is None else box
        periodic = sets[0].periodic if periodic is None else periodic
        return ParticleSet(
            np.concatenate([p.pos for p in sets]),
            np.concatenate([p.vel for p in sets]),
            np.concatenate([p.mass for p in sets]),
            np.concatenate([p.ids for p in sets]),
            box,
            periodic,
        )

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    def momentum(self) -> np.ndarray:
        return (self.mass[:, None] * self.vel).sum(axis=0)

    def kinetic_energy(self) -> float:
        return 0.5 * float(np.sum(self.mass * np.sum(self.vel**2, axis=1)))

    def to_records(self) -> np.ndarray:
        rec = np.empty(len(self), dtype=RECORD_DTYPE)
        rec["id"] = self.ids
        rec["mass"] = self.mass
        rec["pos"] = self.pos
        rec["vel"] = self.vel
        return rec

    @classmethod
    def from_records(cls, rec: np.ndarray, box: float, periodic: bool = True) -> ParticleSet:
        return cls(rec["pos"], rec["vel"], rec["mass"], rec["id"].astype(np.int64), box, periodic)


def write_snapshot(path, particles: ParticleSet, time: float = 0.0):
    """Binary little-endian snapshot: 32-byte header followed by fixed 64-byte records."""
    header = _HEADER.pack(SNAPSHOT_MAGIC, SNAPSHOT_VERSION, len(particles), particles.box, time)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(particles.to_records().tobytes())


def read_snapshot(path, periodic: bool = True) -> tuple[ParticleSet, float]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise SnapshotError("file shorter than snapshot header")
    magic, version, n, box, time = _HEADER.unpack_from(data)
    if magic != SNAPSHOT_MAGIC:
        raise SnapshotError(f"bad magic {magic!r}")
    if version != SNAPSHOT_VERSION:
        raise SnapshotError(f"unsupported snapshot version {version}")
    expected = _HEADER.size + n * RECORD_DTYPE.itemsize
    if len(data) != expected:
        raise SnapshotError(f"expected {expected} bytes for {n} particles, found {len(data)}")
    rec = np.frombuffer(data, dtype=RECORD_DTYPE, count=n, offset=_HEADER.size)
    return ParticleSet.from_records(rec, box, periodic), time


def load_text(path, box: float = 1.0, periodic: bool = True) -> ParticleSet:
    """Whitespace table with columns ``id mass x y z vx vy vz``; ``#`` starts a comment."""
    table = np.loadtxt(path, comments="#", ndmin=2)
    if table.size == 0:
        return ParticleSet.empty(box, periodic)
    if table.shape[1] != 8:
        raise ValueError(f"expected 8 columns, found {table.shape[1]}")
    return ParticleSet(table[:, 2:5], table[:, 5:8], table[:, 1], table[:, 0].astype(np.int64), box, periodic)
