"""Force back-ends sharing one call signature: ``force(particles, step) -> ForceResult``."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .direct import direct_force_oracle
from .pm import Mesh, pm_assign_density, pm_interpolate, pm_solve
from .tree import build_tree, make_groups, tree_force


@dataclass(frozen=True)
class ForceParams:
    """Tree and split settings.

    ``theta_schedule`` maps a step index to the opening angle used from
    that step onwards; steps before the first key use ``theta``.
    """

    theta: float = 0.5
    softening: float = 1e-3
    ncrit: int = 64
    n_leaf: int = 10
    cutoff_cells: float = 3.0
    theta_schedule: Mapping[int, float] | None = field(default=None, hash=False)

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError("theta must be >= 0")
        if self.softening < 0:
            raise ValueError("softening must be >= 0")
        if not self.cutoff_cells > 0:
            raise ValueError("cutoff_cells must be positive")
        if self.ncrit < 1 or self.n_leaf < 1:
            raise ValueError("ncrit and n_leaf must be >= 1")
        if self.theta_schedule is not None and any(v < 0 for v in self.theta_schedule.values()):
            raise ValueError("scheduled theta must be >= 0")

    def theta_at(self, step: int) -> float:
        if not self.theta_schedule:
            return self.theta
        theta = self.theta
        for k in sorted(self.theta_schedule):
            if step >= k:
                theta = self.theta_schedule[k]
        return theta

    def cutoff(self, mesh_side: int, box: float) -> float:
        return self.cutoff_cells * box / mesh_side


@dataclass
class ForceResult:
    acc: np.ndarray
    interactions: int = 0
    tree_seconds: float = 0.0
    pm_seconds: float = 0.0


class DirectForce:
    """Isolated-system direct summation."""

    def __init__(self, params: ForceParams):
        self.params = params

    def __call__(self, particles, step: int = 0) -> ForceResult:
        t0 = time.perf_counter()
        acc = direct_force_oracle(particles, self.params.softening)
        n = len(particles)
        return ForceResult(acc, n * n, time.perf_counter() - t0, 0.0)


class TreeForce:
    """Tree-only force for isolated systems (no periodic images, no split)."""

    def __init__(self, params: ForceParams):
        self.params = params

    def __call__(self, particles, step: int = 0) -> ForceResult:
        t0 = time.perf_counter()
        tree = build_tree(particles, self.params.n_leaf)
        res = tree_force(tree, particles, self.params.theta_at(step), self.params.softening, groups=make_groups(tree, self.params.ncrit))
        return ForceResult(res.acc, res.interactions, time.perf_counter() - t0, 0.0)


class TreePMForce:
    """Periodic TreePM: tapered short-range tree plus long-range mesh."""

    def __init__(self, params: ForceParams, mesh_side: int, box: float = 1.0, deconvolve: bool = True):
        self.params = params
        self.mesh = Mesh(mesh_side, box)
        self.deconvolve = deconvolve
        self.r_cut = params.cutoff(mesh_side, box)

    def long_range(self, particles) -> np.ndarray:
        pm_assign_density(particles, self.mesh)
        pm_solve(self.mesh, r_split=self.r_cut, deconvolve=self.deconvolve)
        return pm_interpolate(self.mesh, particles)

    def __call__(self, particles, step: int = 0) -> ForceResult:
        t0 = time.perf_counter()
        tree = build_tree(particles, self.params.n_leaf)
        res = tree_force(
            tree,
            particles,
            self.params.theta_at(step),
            self.params.softening,
            range_limit=self.r_cut,
            groups=make_groups(tree, self.params.ncrit),
        )
        t1 = time.perf_counter()
        acc = res.acc + self.long_range(particles)
        return ForceResult(acc, res.interactions, t1 - t0, time.perf_counter() - t1)
