"""Initial conditions for tests and desk-scale runs."""

from __future__ import annotations

import numpy as np

from .particles import ParticleSet


def uniform_lattice(n_side: int, box: float = 1.0, noise: float = 0.0, seed: int = 0, total_mass: float = 1.0) -> ParticleSet:
    """``n_side**3`` equal masses on cell centres, optionally jittered.

    ``noise`` is the displacement amplitude in units of the lattice spacing.
    """
    h = box / n_side
    g = (np.arange(n_side) + 0.5) * h
    pos = np.stack(np.meshgrid(g, g, g, indexing="ij"), axis=-1).reshape(-1, 3)
    if noise:
        rng = np.random.default_rng(seed)
        pos = pos + rng.uniform(-noise, noise, size=pos.shape) * h
    n = len(pos)
    return ParticleSet(pos, np.zeros((n, 3)), np.full(n, total_mass / n), np.arange(n), box, True)


def uniform_random(n: int, box: float = 1.0, seed: int = 0, total_mass: float = 1.0) -> ParticleSet:
    rng = np.random.default_rng(seed)
    return ParticleSet(rng.random((n, 3)) * box, np.zeros((n, 3)), np.full(n, total_mass / n), np.arange(n), box, True)


def plummer(n: int, seed: int = 0, a: float = 1.0, total_mass: float = 1.0, r_max: float = 20.0) -> ParticleSet:
    """Isolated Plummer sphere in virial equilibrium (G = 1), centred at rest."""
    rng = np.random.default_rng(seed)
    # radius from the inverse cumulative mass profile, truncated at r_max
    m_max = r_max**3 / (1 + r_max**2) ** 1.5
    x = rng.uniform(0, m_max, n)
    r = a / np.sqrt(x ** (-2.0 / 3.0) - 1.0)
    pos = r[:, None] * _isotropic(rng, n)
    # speeds by von Neumann rejection on q^2 (1 - q^2)^3.5
    q = np.empty(n)
    filled = 0
    while filled < n:
        cand = rng.uniform(0, 1, 2 * (n - filled))
        y = rng.uniform(0, 0.1, len(cand))
        ok = cand[y < cand**2 * (1 - cand**2) ** 3.5]
        take = ok[: n - filled]
        q[filled : filled + len(take)] = take
        filled += len(take)
    v_esc = np.sqrt(2.0 * total_mass / np.sqrt(r**2 + a**2))
    vel = (q * v_esc)[:, None] * _isotropic(rng, n)
    mass = np.full(n, total_mass / n)
    pos -= np.average(pos, axis=0, weights=mass)
    vel -= np.average(vel, axis=0, weights=mass)
    return ParticleSet(pos, vel, mass, np.arange(n), box=1.0, periodic=False)


def _isotropic(rng, n: int) -> np.ndarray:
    u = rng.uniform(-1, 1, n)
    phi = rng.uniform(0, 2 * np.pi, n)
    s = np.sqrt(1 - u**2)
    return np.stack([s * np.cos(phi), s * np.sin(phi), u], axis=1)


def two_body_circular(separation: float = 1.0, m1: float = 0.5, m2: float = 0.5) -> tuple[ParticleSet, float]:
    """Circular binary about the origin; returns the set and its period (G = 1)."""
    mt = m1 + m2
    r1 = separation * m2 / mt
    r2 = separation * m1 / mt
    omega = np.sqrt(mt / separation**3)
    pos = np.array([[r1, 0, 0], [-r2, 0, 0]])
    vel = np.array([[0, omega * r1, 0], [0, -omega * r2, 0]])
    return ParticleSet(pos, vel, [m1, m2], [0, 1], box=1.0, periodic=False), 2 * np.pi / omega
