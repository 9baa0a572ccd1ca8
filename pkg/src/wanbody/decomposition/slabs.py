"""Inter-site slab decomposition along x with sampled load balancing."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from ..nbody.particles import ParticleSet


class MigrationError(RuntimeError):
    """A particle left its slab by more than one neighbouring slab."""


@dataclass(frozen=True)
class SiteSlab:
    """Slab ``[lo, hi)`` of the periodic box owned by one site."""

    site: int
    lo: float
    hi: float
    count: int = 0
    t_calc: float = 0.0

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x) -> np.ndarray:
        x = np.asarray(x)
        return (x >= self.lo) & (x < self.hi)


def uniform_slabs(s: int, box: float = 1.0) -> list[SiteSlab]:
    edges = np.linspace(0.0, box, s + 1)
    edges[-1] = box
    return [SiteSlab(i, float(edges[i]), float(edges[i + 1])) for i in range(s)]


def check_tiling(slabs: Sequence[SiteSlab], box: float) -> None:
    """Raise ValueError unless the slabs tile ``[0, box)`` in site order."""
    if not slabs:
        raise ValueError("no slabs")
    if slabs[0].lo != 0.0 or slabs[-1].hi != box:
        raise ValueError("slabs must start at 0 and end at the box length")
    for i, sl in enumerate(slabs):
        if sl.site != i:
            raise ValueError("slabs must be ordered by site index")
        if not sl.hi > sl.lo:
            raise ValueError(f"slab {i} is empty or inverted")
        if i and sl.lo != slabs[i - 1].hi:
            raise ValueError(f"gap or overlap between slabs {i - 1} and {i}")


def slab_edges(slabs: Sequence[SiteSlab]) -> np.ndarray:
    return np.array([sl.lo for sl in slabs] + [slabs[-1].hi])


def slab_index(x, slabs: Sequence[SiteSlab]) -> np.ndarray:
    """Owning slab of each coordinate in ``[0, box)``."""
    inner = slab_edges(slabs)[1:-1]
    return np.searchsorted(inner, np.asarray(x), side="right")


# ------------------------------------------------------------------ sampling


@dataclass
class SampleSet:
    x: np.ndarray
    r_samp: float

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).ravel()

    def __len__(self) -> int:
        return len(self.x)


def sample_count(n: int, r_samp: float) -> int:
    return int(math.ceil(n * r_samp - 1e-9)) if n else 0


def sample_particles(particles: ParticleSet, r_samp: float) -> SampleSet:
    """Deterministic stride sample of x coordinates in id order.

    Sample ``j`` is the particle of rank ``floor(j / r_samp)`` by id, so an
    integral ``1/r_samp`` gives every k-th particle.
    """
    if not 0 < r_samp <= 1:
        raise ValueError(f"r_samp must lie in (0, 1], got {r_samp}")
    n = len(particles)
    order = np.argsort(particles.ids, kind="stable")
    m = sample_count(n, r_samp)
    rank = np.minimum(np.floor(np.arange(m) / r_samp + 1e-9).astype(np.int64), n - 1)
    return SampleSet(particles.pos[order[rank], 0].copy(), r_samp)


# ------------------------------------------------------------------ boundaries


@dataclass
class BoundaryUpdate:
    slabs: list[SiteSlab]
    targets: np.ndarray  # target sample fraction per site
    degenerate: bool = False


def target_fractions(loads: Sequence[float], counts: Sequence[float] | None = None) -> np.ndarray:
    """Share of particles each site should own so force times equalize.

    A site's speed is estimated as ``count / t_calc``; with equal current
    counts this is simply ``N_i`` proportional to ``1 / t_calc,i``.
    """
    loads = np.asarray(loads, dtype=float)
    if np.any(~(loads > 0)):
        raise ValueError("loads must be positive")
    counts = np.ones_like(loads) if counts is None else np.asarray(counts, dtype=float)
    speed = np.maximum(counts, 1.0) / loads
    return speed / speed.sum()


def update_site_boundaries(
    samples: SampleSet,
    loads: Sequence[float],
    current: Sequence[SiteSlab],
    move_limit: float,
    box: float = 1.0,
    min_width: float | None = None,
    load_counts: Sequence[float] | None = None,
) -> BoundaryUpdate:
    """New slab boundaries from the global sample and per-site force times.

    ``load_counts`` are the particle counts the ``loads`` were measured
    with; by default the sampled counts of the current slabs stand in.

    Each internal boundary is placed inside the gap between the two sampled
    order statistics that realize its cumulative target, as close as
    possible to where it is now, and then moved at most ``move_limit``.
    The outer edges 0 and ``box`` never move.
    """
    s = len(current)
    if len(loads) != s:
        raise ValueError("one load per slab required")
    if move_limit < 0:
        raise ValueError("move_limit must be >= 0")
    min_width = box * 1e-6 if min_width is None else min_width
    old = slab_edges(current)
    x = np.sort(samples.x)
    counts = np.bincount(slab_index(x, current), minlength=s) if len(x) else np.zeros(s)
    frac = target_fractions(loads, counts if load_counts is None else load_counts)
    if s == 1:
        return BoundaryUpdate(list(current), frac)
    if len(x) < s or x[0] == x[-1]:
        return BoundaryUpdate(list(current), frac, degenerate=True)

    n = len(x)
    cum = np.rint(np.cumsum(frac)[:-1] * n).astype(np.int64)
    cum = np.clip(cum, 1, n - 1)
    new = old.copy()
    for i, t in enumerate(cum, start=1):
        lo_ok = np.nextafter(x[t - 1], np.inf)
        hi_ok = x[t]
        if hi_ok < lo_ok:
            # tie across the target: put the boundary at the tie, below it
            lo_ok = hi_ok
        b = min(max(old[i], lo_ok), hi_ok)
        new[i] = old[i] + np.clip(b - old[i], -move_limit, move_limit)

    # keep every slab at least min_width wide; revert offending moves
    for _ in range(s + 1):
        bad = np.flatnonzero(np.diff(new) < min_width)
        if not len(bad):
            break
        for j in bad:
            for k in (j, j + 1):
                if 0 < k < s:
                    new[k] = old[k]
    else:
        new = old.copy()

    slabs = [
        SiteSlab(i, float(new[i]), float(new[i + 1]), current[i].count, current[i].t_calc) for i in range(s)
    ]
    return BoundaryUpdate(slabs, frac)


# ------------------------------------------------------------------ migration


@dataclass
class MigrationSplit:
    stay: ParticleSet
    to_left: ParticleSet
    to_right: ParticleSet


def select_migrants(particles: ParticleSet, slab: SiteSlab, slabs: Sequence[SiteSlab]) -> MigrationSplit:
    """Partition particles into those staying and those moving to a neighbour.

    Coordinates are wrapped into the box first.  A particle outside the slab
    goes to whichever neighbour's slab contains it; when both neighbours are
    the same site (two slabs) the shorter periodic distance decides.
    """
    box = particles.box
    p = particles.copy()
    p.wrap()
    x = p.pos[:, 0]
    s = len(slabs)
    stay = slab.contains(x)
    if s == 1:
        empty = p.subset(np.zeros(0, dtype=np.int64))
        return MigrationSplit(p, empty, empty.copy())
    left_slab = slabs[(slab.site - 1) % s]
    right_slab = slabs[(slab.site + 1) % s]
    out = ~stay
    dist_right = np.mod(x - slab.hi, box)
    dist_left = np.mod(slab.lo - x, box)
    if s == 2:
        go_right = out & (dist_right <= dist_left)
        go_left = out & ~go_right
    else:
        go_right = out & right_slab.contains(x)
        go_left = out & left_slab.contains(x)
        lost = out & ~go_right & ~go_left
        if lost.any():
            i = int(np.flatnonzero(lost)[0])
            raise MigrationError(
                f"particle id {int(p.ids[i])} at x={x[i]:.6g} is more than one slab away from site {slab.site}"
            )
    return MigrationSplit(p.subset(np.flatnonzero(stay)), p.subset(np.flatnonzero(go_left)), p.subset(np.flatnonzero(go_right)))


# ------------------------------------------------------------------ state dump

DUMP_COLUMNS = ("step", "site", "lo", "hi", "count", "t_calc")


def write_decomposition_csv(fh, history) -> None:
    """``history`` is an iterable of ``(step, [SiteSlab, ...])`` pairs."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(DUMP_COLUMNS)
    for step, slabs in history:
        for sl in slabs:
            w.writerow([step, sl.site, repr(sl.lo), repr(sl.hi), sl.count, repr(sl.t_calc)])


def with_stats(slab: SiteSlab, count: int, t_calc: float) -> SiteSlab:
    return replace(slab, count=int(count), t_calc=float(t_calc))
