"""Recursive multisection of one slab among the processes of a site."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .slabs import SiteSlab

MAX_SECTIONS = 32


class MultisectionError(ValueError):
    pass


@dataclass(frozen=True)
class ProcessDomain:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    rank: int
    count: int

    def contains(self, pos: np.ndarray) -> np.ndarray:
        pos = np.asarray(pos)
        return np.all((pos >= np.array(self.lo)) & (pos < np.array(self.hi)), axis=-1)

    @property
    def volume(self) -> float:
        return float(np.prod(np.array(self.hi) - np.array(self.lo)))


def section_counts(p: int, extents, max_sections: int = MAX_SECTIONS) -> tuple[int, int, int]:
    """Sections per axis (x, y, z) whose product is ``p``.

    Picks the factorization that keeps sub-domains closest to cubic and
    raises MultisectionError if every factorization needs more than
    ``max_sections`` cuts along some axis.
    """
    if p < 1:
        raise MultisectionError("p_local must be >= 1")
    extents = np.asarray(extents, dtype=float)
    best = None
    for a in range(1, p + 1):
        if p % a:
            continue
        for b in range(1, p // a + 1):
            if (p // a) % b:
                continue
            c = p // a // b
            f = (a, b, c)
            if max(f) > max_sections:
                continue
            widths = extents / np.array(f)
            score = widths.max() / widths.min()
            if best is None or score < best[0] - 1e-12:
                best = (score, f)
    if best is None:
        raise MultisectionError(
            f"p_local={p} = {_factor_string(p)} cannot be split into three section counts of at most {max_sections}"
        )
    return best[1]


def _factor_string(p: int) -> str:
    out, n, d = [], p, 2
    while d * d <= n:
        while n % d == 0:
            out.append(d)
            n //= d
        d += 1
    if n > 1:
        out.append(n)
    return " x ".join(map(str, out)) or "1"


def _split_points(values: np.ndarray, parts: int, lo: float, hi: float) -> np.ndarray:
    """Cut positions giving ``parts`` pieces whose counts differ by at most one."""
    v = np.sort(values)
    n = len(v)
    cuts = np.empty(parts + 1)
    cuts[0], cuts[-1] = lo, hi
    for j in range(1, parts):
        k = (j * n) // parts
        if n == 0:
            cuts[j] = lo + (hi - lo) * j / parts
        elif k == 0:
            cuts[j] = v[0]
        elif k >= n:
            cuts[j] = np.nextafter(v[-1], np.inf)
        else:
            cuts[j] = 0.5 * (v[k - 1] + v[k]) if v[k] > v[k - 1] else v[k]
        cuts[j] = min(max(cuts[j], cuts[j - 1]), hi)
    return cuts


def multisection_decompose(
    particles, slab: SiteSlab, p_local: int, box: float = 1.0, max_sections: int = MAX_SECTIONS
) -> list[ProcessDomain]:
    """Divide ``slab`` (full extent in y and z) into ``p_local`` boxes of near-equal count.

    Axes are sectioned longest first; every level splits at sample medians.
    """
    lo = np.array([slab.lo, 0.0, 0.0])
    hi = np.array([slab.hi, box, box])
    extents = hi - lo
    counts = section_counts(p_local, extents, max_sections)
    axes = [int(a) for a in np.argsort(-extents, kind="stable")]
    pos = np.asarray(particles.pos)

    boxes = [(lo.copy(), hi.copy(), np.arange(len(pos)))]
    for axis in axes:
        parts = counts[axis]
        nxt = []
        for blo, bhi, idx in boxes:
            cuts = _split_points(pos[idx, axis], parts, blo[axis], bhi[axis])
            which = np.clip(np.searchsorted(cuts[1:-1], pos[idx, axis], side="right"), 0, parts - 1)
            for j in range(parts):
                clo, chi = blo.copy(), bhi.copy()
                clo[axis], chi[axis] = cuts[j], cuts[j + 1]
                nxt.append((clo, chi, idx[which == j]))
        boxes = nxt
    return [ProcessDomain(tuple(map(float, b[0])), tuple(map(float, b[1])), r, len(b[2])) for r, b in enumerate(boxes)]


def domain_ranks(particles, domains: list[ProcessDomain]) -> np.ndarray:
    """Rank of the domain holding each particle (-1 if none)."""
    rank = np.full(len(particles), -1, dtype=np.int64)
    for d in domains:
        rank[d.contains(particles.pos) & (rank < 0)] = d.rank
    return rank
