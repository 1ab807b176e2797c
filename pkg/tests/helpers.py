"""Small random problem instances shared by the tests."""

from types import SimpleNamespace

import numpy as np

from hotmpm.constitutive import Material
from hotmpm.grid_kernels import activate_grid
from hotmpm.objective import ObjectiveState, compute_node_cn
from hotmpm.transfer import Particles, lattice_samples, p2g, particle_stencil


def small_problem(dim=2, extent=(0.3, 0.2, 0.2), dx=0.1, per_axis=2, seed=0, F_spread=0.2,
                  youngs=1e4, poisson=0.3, dt=1e-2, speed=0.1, gravity=None, dirichlet=False,
                  two_materials=False, affine=0.0, stretch=1.0):
    rng = np.random.default_rng(seed)
    lo = np.full(dim, 0.5)
    hi = lo + np.asarray(extent[:dim])
    x = lattice_samples(lo, hi, dx, per_axis, 0.5, rng)
    n = len(x)
    vol = dx**dim / per_axis**dim
    materials = [Material(1000.0, youngs, poisson)]
    mat = np.zeros(n, dtype=np.int64)
    if two_materials:
        materials.append(Material(1000.0, youngs * 1e3, poisson))
        mat[x[:, 0] > lo[0] + 0.5 * (hi[0] - lo[0])] = 1
    F = stretch * np.eye(dim) + F_spread * rng.uniform(-1, 1, size=(n, dim, dim))
    p = Particles.create(x, mass=1000.0 * vol, volume=vol, material=mat,
                         v=speed * rng.standard_normal((n, dim)), F=F)
    p.C = affine * rng.standard_normal((n, dim, dim))
    grid = activate_grid(p.x, dx)
    stencil = particle_stencil(grid, p.x)
    p2g(p, grid, stencil)
    if dirichlet:
        m = grid.coords[:, 0] == grid.coords[:, 0].min()
        grid.dirichlet[:] = m
        grid.dirichlet_velocity[m] = 0.05
    state = ObjectiveState.build(grid, p, stencil, materials, dt, gravity)
    cn = compute_node_cn(state, p, materials)
    return SimpleNamespace(state=state, particles=p, materials=materials, cn=cn, grid=grid,
                           stencil=stencil, rng=rng)


def random_dv(prob, scale=0.05, seed=1):
    rng = np.random.default_rng(seed)
    dv = prob.state.initial_dv()
    free = ~prob.state.dirichlet
    dv[free] = scale * rng.standard_normal((int(free.sum()), prob.state.dim))
    return dv


def fd_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gf = g.reshape(-1)
    for i in range(flat.size):
        e = np.zeros_like(flat)
        e[i] = h
        gf[i] = (f((flat + e).reshape(x.shape)) - f((flat - e).reshape(x.shape))) / (2 * h)
    return g
