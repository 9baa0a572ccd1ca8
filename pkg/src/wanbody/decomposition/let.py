"""Local essential tree export: the pruned part of a site's tree that a
neighbouring slab needs for its short-range walk.

The export is itself an :class:`OcTree`.  It is obtained by walking the
sender's tree with the requester's whole slab (plus a margin) as the
target box.  Cells accepted for the slab are kept as childless aggregates
(``truncated``), cells out of range are dropped, and opened leaves carry
their particles.  Because any target group inside the slab is at least as
far from every cell as the slab itself, a walk over the export visits the
same cells and particles in the same order as a walk over the full tree.
"""

from __future__ import annotations

import struct

import numpy as np

from ..nbody.tree import OcTree, classify
from .slabs import SiteSlab

LET_MAGIC = b"LETX"
_HEADER = struct.Struct("<4sIQQd")
_NODE_DTYPE = np.dtype(
    [
        ("center", "<f8", (3,)),
        ("half", "<f8"),
        ("mass", "<f8"),
        ("com", "<f8", (3,)),
        ("bcenter", "<f8", (3,)),
        ("bhalf", "<f8", (3,)),
        ("child_first", "<i8"),
        ("child_count", "<i4"),
        ("flags", "<i4"),
        ("start", "<i8"),
        ("end", "<i8"),
    ]
)
_PART_DTYPE = np.dtype([("pos", "<f8", (3,)), ("mass", "<f8")])


def region_box(slab: SiteSlab, box: float, margin: float = 0.0):
    """Centre and half widths of a slab's full-height target box."""
    lo, hi = slab.lo - margin, slab.hi + margin
    center = np.array([0.5 * (lo + hi), 0.5 * box, 0.5 * box])
    half = np.array([min(0.5 * (hi - lo), 0.5 * box), 0.5 * box, 0.5 * box])
    return center, half


def empty_tree(box: float | None, n_leaf: int = 10) -> OcTree:
    z = np.zeros(0)
    zi = np.zeros(0, dtype=np.int64)
    return OcTree(
        pos=np.zeros((0, 3)),
        mass=z,
        order=zi,
        start=zi,
        end=zi,
        center=np.zeros((0, 3)),
        half=z,
        node_mass=z,
        com=np.zeros((0, 3)),
        child_first=zi,
        child_count=zi,
        parent=zi,
        level=zi,
        truncated=np.zeros(0, dtype=bool),
        bcenter=np.zeros((0, 3)),
        bhalf=np.zeros((0, 3)),
        n_leaf=n_leaf,
        box=box,
    )


def build_local_essential_tree(
    tree: OcTree | None,
    requester: SiteSlab,
    theta: float,
    range_limit: float | None,
    margin: float = 0.0,
) -> OcTree:
    """Prune ``tree`` to what targets inside ``requester`` can touch.

    ``margin`` widens the slab on both sides (one mesh cell by default in
    the harness).  Returns an empty tree when nothing is within range.
    """
    if tree is None or tree.n_nodes == 0:
        return empty_tree(None if tree is None else tree.box)
    box = tree.box
    gcenter, ghalf = region_box(requester, box if box is not None else 1.0, margin)

    keep_old = []  # old node ids in export order
    parent_new = []
    frontier = np.array([0])
    frontier_parent = np.array([-1])
    new_first: dict[int, int] = {}
    new_count: dict[int, int] = {}
    truncated = []
    n_new = 0
    while len(frontier):
        skip, accepted, opened = classify(tree, frontier, gcenter, ghalf, theta, range_limit)
        keep = ~skip
        kept = frontier[keep]
        kept_parent = frontier_parent[keep]
        ids = np.arange(n_new, n_new + len(kept))
        for par in np.unique(kept_parent):
            if par >= 0:
                sel = ids[kept_parent == par]
                new_first[int(par)] = int(sel[0])
                new_count[int(par)] = len(sel)
        keep_old.append(kept)
        parent_new.append(kept_parent)
        leaf = tree.child_count[kept] == 0
        op = opened[keep]
        truncated.append(~op & ~leaf)
        n_new += len(kept)
        inner_mask = op & ~leaf
        inner_old = kept[inner_mask]
        inner_new = ids[inner_mask]
        if len(inner_old):
            cf = tree.child_first[inner_old]
            cc = tree.child_count[inner_old]
            frontier = np.repeat(cf - np.concatenate([[0], np.cumsum(cc)[:-1]]), cc) + np.arange(cc.sum())
            frontier_parent = np.repeat(inner_new, cc)
        else:
            frontier = inner_old

    old = np.concatenate(keep_old)
    if len(old) == 0:
        return empty_tree(box, tree.n_leaf)
    trunc = np.concatenate(truncated)
    n = len(old)
    child_first = np.full(n, -1, dtype=np.int64)
    child_count = np.zeros(n, dtype=np.int64)
    for p, f in new_first.items():
        child_first[p] = f
        child_count[p] = new_count[p]
    # an opened inner node whose children were all out of range has no work left
    leaf_new = (tree.child_count[old] == 0) & ~trunc
    start = np.zeros(n, dtype=np.int64)
    end = np.zeros(n, dtype=np.int64)
    cnt = np.where(leaf_new, tree.end[old] - tree.start[old], 0)
    end[:] = np.cumsum(cnt)
    start[:] = end - cnt
    pidx = np.concatenate([np.arange(tree.start[o], tree.end[o]) for o in old[leaf_new]]) if leaf_new.any() else np.zeros(0, dtype=np.int64)
    parent = np.full(n, -1, dtype=np.int64)
    parent_map = np.concatenate(parent_new)
    parent[:] = parent_map
    return OcTree(
        pos=tree.pos[pidx],
        mass=tree.mass[pidx],
        order=tree.order[pidx],
        start=start,
        end=end,
        center=tree.center[old],
        half=tree.half[old],
        node_mass=tree.node_mass[old],
        com=tree.com[old],
        child_first=child_first,
        child_count=child_count,
        parent=parent,
        level=tree.level[old],
        truncated=trunc,
        bcenter=tree.bcenter[old],
        bhalf=tree.bhalf[old],
        n_leaf=tree.n_leaf,
        box=box,
    )


def let_particle_count(let: OcTree) -> int:
    return let.n_particles


def encode_let(let: OcTree) -> bytes:
    """Little-endian wire form: header, node records, particle records."""
    nodes = np.zeros(let.n_nodes, dtype=_NODE_DTYPE)
    nodes["center"] = let.center
    nodes["half"] = let.half
    nodes["mass"] = let.node_mass
    nodes["com"] = let.com
    nodes["bcenter"] = let.bcenter
    nodes["bhalf"] = let.bhalf
    nodes["child_first"] = let.child_first
    nodes["child_count"] = let.child_count
    nodes["flags"] = let.truncated.astype(np.int32)
    nodes["start"] = let.start
    nodes["end"] = let.end
    parts = np.zeros(let.n_particles, dtype=_PART_DTYPE)
    parts["pos"] = let.pos
    parts["mass"] = let.mass
    box = -1.0 if let.box is None else float(let.box)
    return _HEADER.pack(LET_MAGIC, 1, let.n_nodes, let.n_particles, box) + nodes.tobytes() + parts.tobytes()


def decode_let(data: bytes) -> OcTree:
    if len(data) < _HEADER.size:
        raise ValueError("LET payload shorter than its header")
    magic, version, n_nodes, n_parts, box = _HEADER.unpack_from(data)
    if magic != LET_MAGIC or version != 1:
        raise ValueError("not a LET payload")
    expected = _HEADER.size + n_nodes * _NODE_DTYPE.itemsize + n_parts * _PART_DTYPE.itemsize
    if len(data) != expected:
        raise ValueError(f"LET payload length {len(data)} != {expected}")
    box = None if box < 0 else box
    if n_nodes == 0:
        return empty_tree(box)
    nodes = np.frombuffer(data, _NODE_DTYPE, n_nodes, _HEADER.size)
    parts = np.frombuffer(data, _PART_DTYPE, n_parts, _HEADER.size + n_nodes * _NODE_DTYPE.itemsize)
    child_first = nodes["child_first"].astype(np.int64)
    child_count = nodes["child_count"].astype(np.int64)
    parent = np.full(n_nodes, -1, dtype=np.int64)
    for i in np.flatnonzero(child_count):
        parent[child_first[i] : child_first[i] + child_count[i]] = i
    return OcTree(
        pos=parts["pos"].copy(),
        mass=parts["mass"].copy(),
        order=np.arange(n_parts),
        start=nodes["start"].astype(np.int64),
        end=nodes["end"].astype(np.int64),
        center=nodes["center"].copy(),
        half=nodes["half"].copy(),
        node_mass=nodes["mass"].copy(),
        com=nodes["com"].copy(),
        child_first=child_first,
        child_count=child_count,
        parent=parent,
        level=np.zeros(n_nodes, dtype=np.int64),
        truncated=nodes["flags"].astype(bool),
        bcenter=nodes["bcenter"].copy(),
        bhalf=nodes["bhalf"].copy(),
        box=box,
    )


def model_let_bytes(n_particles: float, theta: float) -> float:
    """LET volume per boundary assumed by the step-time model."""
    return (48.0 / theta + 24.0) * float(n_particles) ** (2.0 / 3.0)
