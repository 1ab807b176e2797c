"""APIC particle/grid transfers, strain update and advection."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .constitutive import Material, return_map
from .grid_kernels import KernelKind, SparseGrid, point_stencils

log = logging.getLogger(__name__)


@dataclass
class Particles:
    x: np.ndarray
    v: np.ndarray
    mass: np.ndarray
    volume: np.ndarray
    F: np.ndarray
    C: np.ndarray
    material: np.ndarray

    @classmethod
    def create(cls, x, mass, volume, material=None, v=None, F=None):
        x = np.array(x, dtype=float)
        n, d = x.shape
        mass = np.broadcast_to(np.asarray(mass, dtype=float), (n,)).copy()
        volume = np.broadcast_to(np.asarray(volume, dtype=float), (n,)).copy()
        if np.any(mass <= 0) or np.any(volume <= 0):
            raise ValueError("particle mass and volume must be positive")
        return cls(
            x=x,
            v=np.zeros((n, d)) if v is None else np.broadcast_to(np.asarray(v, float), (n, d)).copy(),
            mass=mass,
            volume=volume,
            F=np.tile(np.eye(d), (n, 1, 1)) if F is None else np.array(F, dtype=float),
            C=np.zeros((n, d, d)),
            material=np.zeros(n, dtype=np.int64) if material is None
            else np.broadcast_to(np.asarray(material, dtype=np.int64), (n,)).copy(),
        )

    @property
    def count(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    def copy(self) -> "Particles":
        return Particles(*(a.copy() for a in (self.x, self.v, self.mass, self.volume,
                                              self.F, self.C, self.material)))

    @staticmethod
    def concatenate(parts) -> "Particles":
        parts = list(parts)
        return Particles(*(np.concatenate([getattr(p, f) for p in parts])
                           for f in ("x", "v", "mass", "volume", "F", "C", "material")))


@dataclass
class ParticleStencil:
    """Per-particle node indices with frozen weights and weight gradients.

    Stencil slots whose node is inactive carry index 0 and zero weight.
    """

    nodes: np.ndarray     # (P, K)
    weights: np.ndarray   # (P, K)
    grads: np.ndarray     # (P, K, d)
    dpos: np.ndarray      # (P, K, d), x_i - x_p


def particle_stencil(grid: SparseGrid, x: np.ndarray,
                     kind: KernelKind = KernelKind.QUADRATIC) -> ParticleStencil:
    coords, w, g = point_stencils(kind, x, grid.dx)
    idx = grid.lookup(coords)
    missing = idx < 0
    if np.any(missing & (w > 0)):
        raise ValueError("grid is not activated for these particle positions")
    w = np.where(missing, 0.0, w)
    g = np.where(missing[..., None], 0.0, g)
    dpos = coords * grid.dx - x[:, None, :]
    return ParticleStencil(nodes=np.where(missing, 0, idx), weights=w, grads=g, dpos=dpos)


def scatter(nodes: np.ndarray, vals: np.ndarray, n: int) -> np.ndarray:
    """Deterministic sum of per-(particle, slot) values into nodes."""
    flat = nodes.ravel()
    tail = vals.shape[nodes.ndim:]
    v = vals.reshape(flat.shape[0], int(np.prod(tail)))
    out = np.empty((n, v.shape[1]))
    for c in range(v.shape[1]):
        out[:, c] = np.bincount(flat, weights=v[:, c], minlength=n)
    return out.reshape((n,) + vals.shape[nodes.ndim:])


def p2g(particles: Particles, grid: SparseGrid, stencil: ParticleStencil | None = None) -> SparseGrid:
    """APIC scatter of mass and affine momentum; fills grid.mass/momentum/velocity."""
    st = stencil or particle_stencil(grid, particles.x)
    n = grid.num_nodes
    wm = st.weights * particles.mass[:, None]
    affine = particles.v[:, None, :] + np.einsum("pab,pkb->pka", particles.C, st.dpos)
    grid.mass = scatter(st.nodes, wm, n)
    grid.momentum = scatter(st.nodes, wm[..., None] * affine, n)
    grid.velocity = np.zeros_like(grid.momentum)
    pos = grid.mass > 0
    grid.velocity[pos] = grid.momentum[pos] / grid.mass[pos, None]
    return grid


def g2p(grid_velocity: np.ndarray, particles: Particles, stencil: ParticleStencil, dx: float):
    """APIC gather of particle velocity and affine matrix, in place."""
    vi = grid_velocity[stencil.nodes]
    w = stencil.weights
    particles.v = np.einsum("pk,pka->pa", w, vi)
    B = np.einsum("pk,pka,pkb->pab", w, vi, stencil.dpos)
    particles.C = B * (4.0 / dx**2)
    return particles


def velocity_gradient(grid_velocity: np.ndarray, stencil: ParticleStencil) -> np.ndarray:
    return np.einsum("pka,pkb->pab", grid_velocity[stencil.nodes], stencil.grads)


def update_strain(particles: Particles, grid_velocity: np.ndarray, stencil: ParticleStencil,
                  dt: float, materials: list[Material] | None = None) -> int:
    """Updated-Lagrangian F update followed by the lagged return map.

    Returns the number of particles with det F <= 0 afterwards.
    """
    d = particles.dim
    L = velocity_gradient(grid_velocity, stencil)
    particles.F = (np.eye(d) + dt * L) @ particles.F
    if materials:
        for mid, mat in enumerate(materials):
            sel = particles.material == mid
            if np.any(sel):
                particles.F[sel] = return_map(particles.F[sel], mat)
    inverted = int(np.count_nonzero(np.linalg.det(particles.F) <= 0))
    if inverted:
        log.warning("%d particles inverted after strain update", inverted)
    return inverted


def advect(particles: Particles, dt: float) -> Particles:
    particles.x = particles.x + dt * particles.v
    return particles


def lattice_samples(lo, hi, dx: float, per_axis: int = 2, jitter: float = 0.0,
                    rng: np.random.Generator | None = None) -> np.ndarray:
    """Regular (optionally jittered) samples, `per_axis` per cell along each axis."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    h = dx / per_axis
    axes = [np.arange(a + 0.5 * h, b, h) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([m.ravel() for m in mesh], axis=-1)
    if jitter > 0:
        rng = rng or np.random.default_rng(0)
        pts = pts + (rng.random(pts.shape) - 0.5) * jitter * h
    return pts
