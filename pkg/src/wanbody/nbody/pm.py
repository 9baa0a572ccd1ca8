"""Particle-mesh Poisson solver on a periodic cubic grid.

Grid point ``i`` sits at the cell centre ``(i + 0.5) * h``.  Mass assignment
and force interpolation share the cloud-in-cell kernel, which together with
the antisymmetric difference stencil removes the self-force.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .split import shape_form_factor

G = 1.0


@dataclass
class Mesh:
    """Cubic periodic mesh with ``n`` cells per side.

    ``density`` holds mass per cell (not per volume); ``potential`` and
    ``force`` (shape ``(3, n, n, n)``) are filled by :func:`pm_solve`.
    """

    n: int
    box: float = 1.0
    density: np.ndarray = field(default=None, repr=False)
    potential: np.ndarray = field(default=None, repr=False)
    force: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("mesh needs at least 2 cells per side")
        shape = (self.n,) * 3
        if self.density is None:
            self.density = np.zeros(shape)
        if self.density.shape != shape:
            raise ValueError(f"density shape {self.density.shape} does not match {shape}")
        if self.potential is None:
            self.potential = np.zeros(shape)
        if self.force is None:
            self.force = np.zeros((3,) + shape)

    @property
    def cell(self) -> float:
        return self.box / self.n

    @property
    def size(self) -> int:
        return self.n**3

    def cell_centers(self) -> np.ndarray:
        return (np.arange(self.n) + 0.5) * self.cell

    def clear(self):
        self.density[...] = 0.0
        self.potential[...] = 0.0
        self.force[...] = 0.0


def cic_stencil(pos: np.ndarray, n: int, box: float) -> tuple[np.ndarray, np.ndarray]:
    """Flat cell indices ``(N, 8)`` and weights ``(N, 8)`` of the CIC kernel."""
    u = np.asarray(pos, dtype=float) / (box / n) - 0.5
    i0 = np.floor(u)
    f = u - i0
    i0 = i0.astype(np.int64)
    idx = np.empty((len(u), 8), dtype=np.int64)
    w = np.empty((len(u), 8))
    c = 0
    for dx in (0, 1):
        wx = f[:, 0] if dx else 1.0 - f[:, 0]
        ix = (i0[:, 0] + dx) % n
        for dy in (0, 1):
            wy = f[:, 1] if dy else 1.0 - f[:, 1]
            iy = (i0[:, 1] + dy) % n
            for dz in (0, 1):
                wz = f[:, 2] if dz else 1.0 - f[:, 2]
                iz = (i0[:, 2] + dz) % n
                idx[:, c] = (ix * n + iy) * n + iz
                w[:, c] = wx * wy * wz
                c += 1
    return idx, w


def pm_assign_density(particles, mesh: Mesh, accumulate: bool = False) -> Mesh:
    """Cloud-in-cell mass assignment into ``mesh.density``."""
    if not accumulate:
        mesh.density[...] = 0.0
    if len(particles) == 0:
        return mesh
    idx, w = cic_stencil(particles.pos, mesh.n, mesh.box)
    flat = np.bincount(idx.ravel(), weights=(w * particles.mass[:, None]).ravel(), minlength=mesh.size)
    mesh.density += flat.reshape(mesh.density.shape)
    return mesh


def _wavenumbers(n: int, box: float):
    h = box / n
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=h)
    kz = 2.0 * np.pi * np.fft.rfftfreq(n, d=h)
    return k[:, None, None], k[None, :, None], kz[None, None, :]


def green_function(n: int, box: float, r_split: float | None = None, deconvolve: bool = False) -> np.ndarray:
    """Potential kernel ``-4 pi G / k^2`` on the half-complex grid, zero mean mode.

    With ``r_split`` the kernel is multiplied by the squared shape form
    factor so the mesh carries only the long-range part.  ``deconvolve``
    divides out the CIC window of assignment and interpolation.
    """
    kx, ky, kz = _wavenumbers(n, box)
    k2 = kx**2 + ky**2 + kz**2
    with np.errstate(divide="ignore"):
        g = -4.0 * np.pi * G / k2
    g[0, 0, 0] = 0.0
    if r_split is not None:
        g = g * shape_form_factor(np.sqrt(k2), r_split) ** 2
    if deconvolve:
        h = box / n
        w = np.sinc(kx * h / (2 * np.pi)) * np.sinc(ky * h / (2 * np.pi)) * np.sinc(kz * h / (2 * np.pi))
        g = g / w**4
    return g


def _gradient(phi: np.ndarray, h: float, axis: int) -> np.ndarray:
    # fourth-order central difference, periodic
    return (
        8.0 * (np.roll(phi, -1, axis) - np.roll(phi, 1, axis)) - (np.roll(phi, -2, axis) - np.roll(phi, 2, axis))
    ) / (12.0 * h)


def pm_solve(mesh: Mesh, r_split: float | None = None, deconvolve: bool = False) -> Mesh:
    """Solve the periodic Poisson equation for the mass held in ``mesh.density``."""
    h = mesh.cell
    rho = mesh.density / h**3
    rho_k = np.fft.rfftn(rho)
    phi = np.fft.irfftn(rho_k * green_function(mesh.n, mesh.box, r_split, deconvolve), s=rho.shape, axes=(0, 1, 2))
    mesh.potential = phi
    mesh.force = np.stack([-_gradient(phi, h, a) for a in range(3)])
    return mesh


def pm_interpolate(mesh: Mesh, particles) -> np.ndarray:
    """Mesh accelerations at the particle positions (same CIC kernel as assignment)."""
    if len(particles) == 0:
        return np.zeros((0, 3))
    idx, w = cic_stencil(particles.pos, mesh.n, mesh.box)
    flat = mesh.force.reshape(3, -1)
    return np.stack([(flat[a][idx] * w).sum(axis=1) for a in range(3)], axis=1)
