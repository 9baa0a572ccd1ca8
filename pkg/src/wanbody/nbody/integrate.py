"""Shared-timestep kick-drift-kick leapfrog."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class FixedStep:
    dt: float

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")

    def __call__(self, acc: np.ndarray) -> float:
        return self.dt


@dataclass(frozen=True)
class AdaptiveStep:
    """``dt = eta * min_i sqrt(softening / |a_i|)``, capped at ``dt_max``.

    When every acceleration is zero the step falls back to ``dt_max``.
    """

    softening: float
    dt_max: float
    eta: float = 0.1

    def __post_init__(self):
        if not (self.softening > 0 and self.dt_max > 0 and self.eta > 0):
            raise ValueError("softening, dt_max and eta must be positive")

    def __call__(self, acc: np.ndarray) -> float:
        amax = float(np.sqrt(np.max(np.einsum("ij,ij->i", acc, acc)))) if len(acc) else 0.0
        if amax == 0.0:
            return self.dt_max
        return min(self.dt_max, self.eta * np.sqrt(self.softening / amax))


def integrate_step(state, force, dt_policy, acc: np.ndarray | None = None, step: int = 0):
    """Advance ``state`` by one kick-drift-kick step.

    ``force(particles, step)`` must return an object with an ``acc`` array
    aligned with the particle order.  Passing the acceleration returned by
    the previous call avoids recomputing it.

    Returns
    -------
    (ParticleSet, acc, dt)
    """
    if acc is None:
        acc = force(state, step).acc
    dt = dt_policy(acc)
    new = state.copy()
    new.vel += 0.5 * dt * acc
    new.pos += dt * new.vel
    if new.periodic:
        new.wrap()
    acc_new = force(new, step + 1).acc
    new.vel += 0.5 * dt * acc_new
    return new, acc_new, dt
