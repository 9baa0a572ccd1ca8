"""O(N^2) reference forces used to verify the tree and mesh solvers."""

from __future__ import annotations

import numpy as np

from .tree import _min_image, pair_accel

DEFAULT_CAP = 100_000


def direct_force_oracle(
    particles,
    softening: float,
    range_limit: float | None = None,
    cap: int = DEFAULT_CAP,
    block: int = 256,
) -> np.ndarray:
    """Exact pairwise softened accelerations (G = 1).

    With ``range_limit`` the periodic minimum-image separation is used and the
    pair force is tapered by the same short-range kernel as the tree, which
    makes it zero beyond the limit.
    """
    n = len(particles)
    if n > cap:
        raise ValueError(f"direct summation capped at {cap} particles, got {n}")
    box = particles.box if range_limit is not None else None
    acc = np.zeros((n, 3))
    for i in range(0, n, block):
        acc[i : i + block] = pair_accel(particles.pos[i : i + block], particles.pos, particles.mass, softening, box, range_limit)
    return acc


def direct_potential_energy(particles, softening: float, cap: int = DEFAULT_CAP, block: int = 256) -> float:
    """Softened isolated-system potential energy (each pair counted once)."""
    n = len(particles)
    if n > cap:
        raise ValueError(f"direct summation capped at {cap} particles, got {n}")
    total = 0.0
    for i in range(0, n, block):
        dx = particles.pos[None, :, :] - particles.pos[i : i + block, None, :]
        r2 = np.einsum("ijk,ijk->ij", dx, dx)
        with np.errstate(divide="ignore"):
            inv = 1.0 / np.sqrt(r2 + softening**2)
        rows = np.arange(len(inv))
        inv[rows, i + rows] = 0.0
        total += float(np.sum(particles.mass[i : i + block, None] * particles.mass[None, :] * inv))
    return -0.5 * total
