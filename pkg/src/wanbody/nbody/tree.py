"""Linear octree built from Morton keys, with a grouped Barnes-Hut walk.

Nodes are stored in flat arrays.  Children of a node are contiguous, and
each node owns the contiguous range ``[start, end)`` of the Morton-sorted
particles.  A *truncated* node is a terminal cell whose children were
dropped when the tree was pruned for export; walking into one is an error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .split import short_range_taper

MORTON_BITS = 21


class EmptyTreeError(ValueError):
    pass


class TruncatedNodeError(RuntimeError):
    """A walk tried to open a cell that was exported only as an aggregate."""


def _spread_bits(v: np.ndarray) -> np.ndarray:
    v = v.astype(np.uint64) & np.uint64(0x1FFFFF)
    v = (v | (v << np.uint64(32))) & np.uint64(0x1F00000000FFFF)
    v = (v | (v << np.uint64(16))) & np.uint64(0x1F0000FF0000FF)
    v = (v | (v << np.uint64(8))) & np.uint64(0x100F00F00F00F00F)
    v = (v | (v << np.uint64(4))) & np.uint64(0x10C30C30C30C30C3)
    v = (v | (v << np.uint64(2))) & np.uint64(0x1249249249249249)
    return v


def morton_keys(q: np.ndarray) -> np.ndarray:
    """Interleave three 21-bit integer coordinates (x most significant)."""
    return (_spread_bits(q[:, 0]) << np.uint64(2)) | (_spread_bits(q[:, 1]) << np.uint64(1)) | _spread_bits(q[:, 2])


@dataclass
class OcTree:
    """Flat octree over a particle set.

    ``pos`` and ``mass`` are in Morton order; ``order[i]`` is the index in
    the original input of sorted particle ``i``.  ``box`` is the periodic
    box length, or None for an isolated system.
    """

    pos: np.ndarray
    mass: np.ndarray
    order: np.ndarray
    start: np.ndarray
    end: np.ndarray
    center: np.ndarray
    half: np.ndarray
    node_mass: np.ndarray
    com: np.ndarray
    child_first: np.ndarray
    child_count: np.ndarray
    parent: np.ndarray
    level: np.ndarray
    truncated: np.ndarray
    bcenter: np.ndarray = None  # tight particle bounding box per node
    bhalf: np.ndarray = None
    n_leaf: int = 10
    box: float | None = None
    _groups: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_nodes(self) -> int:
        return len(self.half)

    @property
    def n_particles(self) -> int:
        return len(self.mass)

    @property
    def is_leaf(self) -> np.ndarray:
        return (self.child_count == 0) & ~self.truncated

    def count(self) -> np.ndarray:
        return self.end - self.start

    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self.is_leaf)

    def children(self, node: int) -> np.ndarray:
        f = self.child_first[node]
        return np.arange(f, f + self.child_count[node])


def _level_reduce(ufunc, values: np.ndarray, starts: np.ndarray, ends: np.ndarray, pad_value: float) -> np.ndarray:
    pad = np.concatenate([values, np.full((1,) + values.shape[1:], pad_value)])
    bounds = np.empty(2 * len(starts), dtype=np.int64)
    bounds[0::2] = starts
    bounds[1::2] = ends
    return ufunc.reduceat(pad, bounds, axis=0)[0::2]


def _level_sums(values: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Sums of ``values`` over disjoint, increasing ranges ``[start, end)``."""
    pad = np.concatenate([values, np.zeros((1,) + values.shape[1:])])
    bounds = np.empty(2 * len(starts), dtype=np.int64)
    bounds[0::2] = starts
    bounds[1::2] = ends
    return np.add.reduceat(pad, bounds, axis=0)[0::2]


def build_tree(particles, n_leaf: int = 10) -> OcTree:
    """Build an octree with at most ``n_leaf`` particles per leaf.

    Construction depends only on positions and input order, so it is
    deterministic.  Coincident particles that cannot be separated within
    21 levels end up together in one leaf.
    """
    pos = np.asarray(particles.pos, dtype=float)
    mass = np.asarray(particles.mass, dtype=float)
    n = len(mass)
    if n == 0:
        raise EmptyTreeError("cannot build a tree from an empty particle set")
    if n_leaf < 1:
        raise ValueError("n_leaf must be >= 1")
    box = particles.box if getattr(particles, "periodic", False) else None

    lo = pos.min(axis=0)
    extent = float((pos.max(axis=0) - lo).max())
    side = extent * (1.0 + 1e-9) if extent > 0 else max(1e-12, 1e-12 * float(np.abs(lo).max()))
    ncell = 1 << MORTON_BITS
    q = np.clip(np.floor((pos - lo) * (ncell / side)), 0, ncell - 1).astype(np.int64)
    keys = morton_keys(q)
    order = np.argsort(keys, kind="stable")
    keys = keys[order]
    spos = pos[order]
    smass = mass[order]

    starts = [np.array([0])]
    ends = [np.array([n])]
    centers = [(lo + 0.5 * side)[None, :]]
    halves = [np.array([0.5 * side])]
    parents = [np.array([-1])]
    bases = [np.array([0], dtype=np.uint64)]
    child_first = []
    child_count = []

    offsets = np.array([[(c >> 2) & 1, (c >> 1) & 1, c & 1] for c in range(8)], dtype=float) * 2.0 - 1.0
    n_nodes = 1
    for lev in range(MORTON_BITS + 1):
        s, e = starts[-1], ends[-1]
        split = (e - s > n_leaf) & (lev < MORTON_BITS)
        cf = np.full(len(s), -1, dtype=np.int64)
        cc = np.zeros(len(s), dtype=np.int64)
        idx = np.flatnonzero(split)
        if len(idx):
            shift = np.uint64(3 * (MORTON_BITS - lev - 1))
            sub = bases[-1][idx, None] + (np.arange(9, dtype=np.uint64)[None, :] << shift)
            bounds = np.searchsorted(keys, sub.ravel(), side="left").reshape(sub.shape)
            c_start = bounds[:, :-1]
            c_end = bounds[:, 1:]
            nonempty = c_end > c_start
            cnt = nonempty.sum(axis=1)
            cf[idx] = n_nodes + np.concatenate([[0], np.cumsum(cnt)[:-1]])
            cc[idx] = cnt
            rows, cols = np.nonzero(nonempty)
            h = halves[-1][idx][rows] * 0.5
            starts.append(c_start[rows, cols])
            ends.append(c_end[rows, cols])
            centers.append(centers[-1][idx][rows] + offsets[cols] * h[:, None])
            halves.append(h)
            parents.append(np.flatnonzero(split)[rows] + (n_nodes - len(s)))
            bases.append(sub[rows, cols])
            n_nodes += len(rows)
        child_first.append(cf)
        child_count.append(cc)
        if not len(idx):
            break

    start = np.concatenate(starts)
    end = np.concatenate(ends)
    # per-level masses: ranges within one level are disjoint and increasing
    node_mass = np.concatenate([_level_sums(smass, a, b) for a, b in zip(starts, ends)])
    mx = np.concatenate([_level_sums(smass[:, None] * spos, a, b) for a, b in zip(starts, ends)])
    bmin = np.concatenate([_level_reduce(np.minimum, spos, a, b, np.inf) for a, b in zip(starts, ends)])
    bmax = np.concatenate([_level_reduce(np.maximum, spos, a, b, -np.inf) for a, b in zip(starts, ends)])
    return OcTree(
        pos=spos,
        mass=smass,
        order=order,
        start=start,
        end=end,
        center=np.concatenate(centers),
        half=np.concatenate(halves),
        node_mass=node_mass,
        com=mx / node_mass[:, None],
        child_first=np.concatenate(child_first),
        child_count=np.concatenate(child_count),
        parent=np.concatenate(parents),
        level=np.concatenate([np.full(len(a), i) for i, a in enumerate(starts)]),
        truncated=np.zeros(len(start), dtype=bool),
        bcenter=0.5 * (bmin + bmax),
        bhalf=0.5 * (bmax - bmin),
        n_leaf=n_leaf,
        box=box,
    )


# ------------------------------------------------------------------ walking


@dataclass
class Group:
    """Targets sharing one interaction list, with their bounding box."""

    index: np.ndarray  # indices into the target particle arrays
    center: np.ndarray
    half: np.ndarray  # per-axis half widths


def make_groups(tree: OcTree, ncrit: int) -> list[Group]:
    """Tile the tree's particles with the largest nodes holding <= ncrit particles.

    Group ``index`` arrays refer to the original (unsorted) particle order.
    """
    if ncrit < 1:
        raise ValueError("ncrit must be >= 1")
    key = ncrit
    if key in tree._groups:
        return tree._groups[key]
    cnt = tree.count()
    parent_cnt = np.where(tree.parent >= 0, cnt[np.maximum(tree.parent, 0)], np.iinfo(np.int64).max)
    nodes = np.flatnonzero((cnt <= ncrit) & (parent_cnt > ncrit))
    if cnt[0] <= ncrit:
        nodes = np.array([0])
    nodes = nodes[np.argsort(tree.start[nodes], kind="stable")]
    groups = []
    for node in nodes:
        s, e = tree.start[node], tree.end[node]
        p = tree.pos[s:e]
        lo, hi = p.min(axis=0), p.max(axis=0)
        groups.append(Group(tree.order[s:e], 0.5 * (lo + hi), 0.5 * (hi - lo)))
    tree._groups[key] = groups
    return groups


def groups_for(targets, ncrit: int, n_leaf: int = 10) -> list[Group]:
    return make_groups(build_tree(targets, n_leaf), ncrit)


def _min_image(d: np.ndarray, box: float | None) -> np.ndarray:
    if box is None:
        return d
    return d - box * np.round(d / box)


def classify(
    tree: OcTree,
    nodes: np.ndarray,
    gcenter: np.ndarray,
    ghalf: np.ndarray,
    theta: float,
    range_limit: float | None,
):
    """Split ``nodes`` into (skipped, accepted, opened) for a target box.

    Skipped nodes have all their particles beyond ``range_limit`` of the
    box (tested on the tight particle bounding box); accepted
    nodes pass the opening test ``l <= theta * d`` where ``d`` is the
    distance from the target box to the node's centre of mass.
    """
    box = tree.box
    half = tree.half[nodes]
    skip = np.zeros(len(nodes), dtype=bool)
    if range_limit is not None:
        gap = np.maximum(np.abs(_min_image(tree.bcenter[nodes] - gcenter, box)) - (tree.bhalf[nodes] + ghalf), 0.0)
        skip = np.einsum("ij,ij->i", gap, gap) >= range_limit**2
    dv = np.maximum(np.abs(_min_image(tree.com[nodes] - gcenter, box)) - ghalf, 0.0)
    d = np.sqrt(np.einsum("ij,ij->i", dv, dv))
    side = 2.0 * half
    opened = side > theta * d
    if box is not None and range_limit is not None:
        # an aggregate this large has no unambiguous periodic image
        opened |= side >= 0.5 * box - range_limit
    opened &= ~skip
    accepted = ~skip & ~opened
    return skip, accepted, opened


def walk(tree: OcTree, gcenter, ghalf, theta: float, range_limit: float | None = None):
    """Interaction list of one target box: (particle indices, cell nodes).

    Particle indices refer to the tree's sorted arrays.
    """
    frontier = np.array([0])
    cells = []
    ranges = []
    while len(frontier):
        _, accepted, opened = classify(tree, frontier, gcenter, ghalf, theta, range_limit)
        cells.append(frontier[accepted])
        op = frontier[opened]
        if tree.truncated[op].any():
            raise TruncatedNodeError(f"walk opened exported aggregate node {op[tree.truncated[op]][0]}")
        leaf = tree.child_count[op] == 0
        ranges.append(op[leaf])
        inner = op[~leaf]
        if len(inner):
            cf = tree.child_first[inner]
            cc = tree.child_count[inner]
            frontier = np.repeat(cf - np.concatenate([[0], np.cumsum(cc)[:-1]]), cc) + np.arange(cc.sum())
        else:
            frontier = inner
    leaves = np.concatenate(ranges) if ranges else np.zeros(0, dtype=np.int64)
    if len(leaves):
        s, e = tree.start[leaves], tree.end[leaves]
        cnt = e - s
        parts = np.repeat(s - np.concatenate([[0], np.cumsum(cnt)[:-1]]), cnt) + np.arange(cnt.sum())
    else:
        parts = np.zeros(0, dtype=np.int64)
    return parts, np.concatenate(cells)


def pair_accel(
    tpos: np.ndarray,
    spos: np.ndarray,
    smass: np.ndarray,
    softening: float,
    box: float | None = None,
    range_limit: float | None = None,
) -> np.ndarray:
    """Softened accelerations on ``tpos`` from point sources (G = 1).

    Coincident pairs contribute nothing, so a target may appear among the sources.
    """
    dx = _min_image(spos[None, :, :] - tpos[:, None, :], box)
    r2 = np.einsum("ijk,ijk->ij", dx, dx)
    with np.errstate(divide="ignore"):
        w = smass[None, :] / (r2 + softening**2) ** 1.5
    w[r2 == 0.0] = 0.0
    if range_limit is not None:
        w *= short_range_taper(np.sqrt(r2), range_limit)
    return np.einsum("ij,ijk->ik", w, dx)


@dataclass
class TreeWalkResult:
    acc: np.ndarray
    interactions: int
    per_source: list[int] = field(default_factory=list)


def tree_force(
    sources,
    targets,
    theta: float,
    softening: float,
    ncrit: int = 64,
    range_limit: float | None = None,
    groups: list[Group] | None = None,
) -> TreeWalkResult:
    """Barnes-Hut accelerations on ``targets`` from one tree or a sequence of trees.

    Each group of at most ``ncrit`` targets walks every source tree in
    turn and contributions are added in source order, so results are
    reproducible regardless of how the trees were obtained.
    ``interactions`` counts target-particle plus target-cell evaluations.
    """
    trees = [sources] if isinstance(sources, OcTree) else list(sources)
    if theta < 0:
        raise ValueError("theta must be >= 0")
    n = len(targets)
    acc = np.zeros((n, 3))
    per_source = [0] * len(trees)
    if n == 0:
        return TreeWalkResult(acc, 0, per_source)
    if groups is None:
        groups = groups_for(targets, ncrit)
    tpos_all = targets.pos
    for g in groups:
        tpos = tpos_all[g.index]
        a = np.zeros((len(g.index), 3))
        for k, tree in enumerate(trees):
            if tree is None or tree.n_nodes == 0:
                continue
            parts, cells = walk(tree, g.center, g.half, theta, range_limit)
            spos = np.concatenate([tree.pos[parts], tree.com[cells]])
            smass = np.concatenate([tree.mass[parts], tree.node_mass[cells]])
            if len(smass):
                a += pair_accel(tpos, spos, smass, softening, tree.box, range_limit)
            per_source[k] += len(g.index) * len(smass)
        acc[g.index] = a
    return TreeWalkResult(acc, sum(per_source), per_source)
