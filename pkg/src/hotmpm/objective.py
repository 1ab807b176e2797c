"""Incremental potential of one implicit Euler grid step.

The optimization variable is the nodal velocity increment dv (n, d). Node
positions are displaced only virtually, so weights and weight gradients
stay frozen at the start-of-step particle positions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .constitutive import Material, fcr_energy_density, fcr_stress, fcr_stress_derivative, \
    project_spd, stiffness_scale
from .grid_kernels import SparseGrid
from .sparse import BlockSparseMatrix
from .transfer import ParticleStencil, Particles, scatter

CN_LENGTH_FACTOR = 24.0
LEVEL0_RADIUS = 2
_CHUNK = 4096


@dataclass
class ObjectiveState:
    grid: SparseGrid
    dt: float
    stencil: ParticleStencil
    F0: np.ndarray
    volume: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    gravity: np.ndarray
    gF: np.ndarray = field(init=False, repr=False)
    valid: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        # F0^T grad(w): dF/d(v_k) = dt * e_c (x) gF_k
        self.gF = np.einsum("pba,pkb->pka", self.F0, self.stencil.grads)
        self.valid = self.stencil.weights > 0.0
        self.gravity = np.asarray(self.gravity, dtype=float)

    @classmethod
    def build(cls, grid: SparseGrid, particles: Particles, stencil: ParticleStencil,
              materials: list[Material], dt: float, gravity=None) -> "ObjectiveState":
        mu = np.array([m.mu for m in materials])[particles.material]
        lam = np.array([m.lam for m in materials])[particles.material]
        g = np.zeros(grid.dim) if gravity is None else np.asarray(gravity, dtype=float)
        return cls(grid=grid, dt=float(dt), stencil=stencil, F0=particles.F.copy(),
                   volume=particles.volume.copy(), mu=mu, lam=lam, gravity=g)

    @property
    def num_nodes(self) -> int:
        return self.grid.num_nodes

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def mass(self) -> np.ndarray:
        return self.grid.mass

    @property
    def dirichlet(self) -> np.ndarray:
        return self.grid.dirichlet

    @property
    def dirichlet_dv(self) -> np.ndarray:
        out = np.zeros((self.num_nodes, self.dim))
        m = self.grid.dirichlet
        out[m] = self.grid.dirichlet_velocity[m] - self.grid.velocity[m]
        return out

    def initial_dv(self) -> np.ndarray:
        return self.dirichlet_dv

    def deformation(self, dv: np.ndarray) -> np.ndarray:
        v = self.grid.velocity + dv
        return self.F0 + self.dt * np.einsum("pka,pkb->pab", v[self.stencil.nodes], self.gF)


def _check(dv):
    dv = np.asarray(dv, dtype=float)
    if not np.all(np.isfinite(dv)):
        raise ValueError("non-finite velocity increment")
    return dv


def energy(state: ObjectiveState, dv: np.ndarray) -> float:
    dv = _check(dv)
    m = state.mass
    kinetic = 0.5 * np.sum(m * np.sum(dv * dv, axis=1))
    F = state.deformation(dv)
    elastic = np.sum(state.volume * fcr_energy_density(F, state.mu, state.lam))
    v_next = state.grid.velocity + dv
    grav = -state.dt * np.sum(m * (v_next @ state.gravity))
    return float(kinetic + elastic + grav)


def gradient(state: ObjectiveState, dv: np.ndarray) -> np.ndarray:
    """dE/d(dv), zero on Dirichlet nodes."""
    dv = _check(dv)
    m = state.mass[:, None]
    F = state.deformation(dv)
    P = fcr_stress(F, state.mu, state.lam) * state.volume[:, None, None]
    contrib = np.einsum("pab,pkb->pka", P, state.gF)
    g = m * dv - state.dt * m * state.gravity + state.dt * scatter(state.stencil.nodes, contrib, state.num_nodes)
    g[state.dirichlet] = 0.0
    return g


def projected_stress_derivatives(state: ObjectiveState, dv: np.ndarray) -> np.ndarray:
    F = state.deformation(_check(dv))
    return project_spd(fcr_stress_derivative(F, state.mu, state.lam))


def assemble_hessian(state: ObjectiveState, dv: np.ndarray,
                     stress_derivs: np.ndarray | None = None) -> BlockSparseMatrix:
    """Projected Hessian M + dt^2 sum_p V_p (...), Dirichlet rows/cols set to identity."""
    d = state.dim
    A = projected_stress_derivatives(state, dv) if stress_derivs is None else stress_derivs
    H = BlockSparseMatrix(state.grid.coords, state.grid.index, LEVEL0_RADIUS)
    nodes = state.stencil.nodes
    P, K = nodes.shape
    scale = state.dt**2 * state.volume
    for s in range(0, P, _CHUNK):
        sl = slice(s, s + _CHUNK)
        A4 = A[sl].reshape(-1, d, d, d, d)
        g = state.gF[sl]
        blocks = np.einsum("pcbCe,pkb,ple->pklcC", A4, g, g, optimize=True) * scale[sl, None, None, None, None]
        valid = state.valid[sl]
        pair = valid[:, :, None] & valid[:, None, :]
        rows = np.broadcast_to(nodes[sl][:, :, None], pair.shape)[pair]
        cols = np.broadcast_to(nodes[sl][:, None, :], pair.shape)[pair]
        H.accumulate(rows, cols, blocks[pair])
    H.blocks[:, H.center] += state.mass[:, None, None] * np.eye(d)
    H.project_dirichlet(state.dirichlet)
    return H


class MatrixFreeHessian:
    """Projected Hessian applied without assembling blocks."""

    def __init__(self, state: ObjectiveState, dv: np.ndarray, stress_derivs: np.ndarray | None = None):
        self.state = state
        self.A = projected_stress_derivatives(state, dv) if stress_derivs is None else stress_derivs
        self._diag = None

    def matvec(self, u: np.ndarray) -> np.ndarray:
        st = self.state
        d = st.dim
        u = np.array(u, dtype=float).reshape(st.num_nodes, d)
        fixed = st.dirichlet
        u_free = u.copy()
        u_free[fixed] = 0.0
        dF = np.einsum("pka,pkb->pab", u_free[st.stencil.nodes], st.gF)
        dP = np.einsum("pij,pj->pi", self.A, dF.reshape(-1, d * d)).reshape(-1, d, d)
        dP *= (st.dt**2 * st.volume)[:, None, None]
        out = st.mass[:, None] * u_free + scatter(st.stencil.nodes, np.einsum("pab,pkb->pka", dP, st.gF), st.num_nodes)
        out[fixed] = u[fixed]
        return out

    __matmul__ = matvec

    def scalar_diagonal(self) -> np.ndarray:
        """Diagonal of the operator (for Jacobi preconditioning)."""
        if self._diag is None:
            st = self.state
            d = st.dim
            A4 = self.A.reshape(-1, d, d, d, d)
            # diag entry (k, c): sum_p dt^2 V_p sum_{b,e} A[c,b,c,e] gF_k[b] gF_k[e]
            Acc = np.einsum("pcbce->pcbe", A4)
            vals = np.einsum("pcbe,pkb,pke->pkc", Acc, st.gF, st.gF) * (st.dt**2 * st.volume)[:, None, None]
            diag = st.mass[:, None] + scatter(st.stencil.nodes, vals, st.num_nodes)
            diag[st.dirichlet] = 1.0
            self._diag = diag
        return self._diag


def multiply_matrix_free(state: ObjectiveState, dv: np.ndarray, u: np.ndarray) -> np.ndarray:
    return MatrixFreeHessian(state, dv).matvec(u)


@dataclass
class NodeCN:
    xi: np.ndarray
    dx: float
    dt: float
    length_factor: float = CN_LENGTH_FACTOR

    @property
    def ell(self) -> float:
        return self.length_factor * self.dx**2

    @property
    def scale(self) -> np.ndarray:
        return self.ell * self.xi * self.dt


def compute_node_cn(state: ObjectiveState, particles: Particles, materials: list[Material],
                    length_factor: float = CN_LENGTH_FACTOR) -> NodeCN:
    """Mass-weighted, normalized transfer of per-particle stiffness to nodes."""
    xi_p = np.array([stiffness_scale(m, state.dim) for m in materials])[particles.material]
    wm = state.stencil.weights * particles.mass[:, None]
    n = state.num_nodes
    num = scatter(state.stencil.nodes, wm * xi_p[:, None], n)
    den = scatter(state.stencil.nodes, wm, n)
    xi = np.divide(num, den, out=np.zeros(n), where=den > 0)
    return NodeCN(xi=xi, dx=state.grid.dx, dt=state.dt, length_factor=length_factor)


def scaled_norm(g: np.ndarray, cn: NodeCN) -> float:
    g = np.asarray(g, dtype=float)
    s = cn.scale
    if g.shape[0] != s.shape[0]:
        raise ValueError("gradient and node scale sizes differ")
    if np.any(s <= 0):
        raise ValueError("zero characteristic stiffness at a node (material misconfiguration)")
    return float(np.linalg.norm(g / s[:, None]))


# -- scripted Dirichlet boundaries -------------------------------------------


def _rotation(omega, t: float, dim: int) -> np.ndarray:
    if dim == 2:
        a = float(omega) * t
        c, s = np.cos(a), np.sin(a)
        return np.array([[c, -s], [s, c]])
    w = np.asarray(omega, dtype=float)
    theta = np.linalg.norm(w) * t
    if theta == 0:
        return np.eye(3)
    k = w / np.linalg.norm(w)
    Kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + np.sin(theta) * Kx + (1 - np.cos(theta)) * Kx @ Kx


@dataclass
class Motion:
    """Rigid scripted motion: translation plus rotation about a pivot."""

    velocity: np.ndarray | None = None
    omega: float | np.ndarray | None = None
    pivot: np.ndarray | None = None

    def transform(self, x0: np.ndarray, t: float) -> np.ndarray:
        x = np.asarray(x0, dtype=float)
        d = x.shape[-1]
        if self.omega is not None:
            piv = np.asarray(self.pivot, dtype=float)
            x = piv + (x - piv) @ _rotation(self.omega, t, d).T
        if self.velocity is not None:
            x = x + np.asarray(self.velocity, dtype=float) * t
        return x

    def rotate(self, n: np.ndarray, t: float) -> np.ndarray:
        if self.omega is None:
            return np.asarray(n, dtype=float)
        return np.asarray(n, dtype=float) @ _rotation(self.omega, t, len(n)).T

    def velocity_at(self, x: np.ndarray, t: float) -> np.ndarray:
        d = x.shape[-1]
        v = np.zeros_like(x)
        if self.velocity is not None:
            v += np.asarray(self.velocity, dtype=float)
        if self.omega is not None:
            piv = self.transform(np.asarray(self.pivot, dtype=float), t) if self.velocity is not None \
                else np.asarray(self.pivot, dtype=float)
            r = x - piv
            if d == 2:
                v += float(self.omega) * np.stack([-r[:, 1], r[:, 0]], axis=-1)
            else:
                v += np.cross(np.asarray(self.omega, dtype=float), r)
        return v


@dataclass
class Collider:
    """Sticky scripted region: half_space, sphere or cylinder (3D axis)."""

    shape: str
    center: np.ndarray
    normal: np.ndarray | None = None
    radius: float = 0.0
    axis: np.ndarray | None = None
    motion: Motion = field(default_factory=Motion)

    def contains(self, x: np.ndarray, t: float) -> np.ndarray:
        c = self.motion.transform(self.center, t)
        if self.shape == "half_space":
            n = self.motion.rotate(self.normal, t)
            return (x - c) @ n <= 0.0
        r = x - c
        if self.shape == "cylinder" and x.shape[-1] == 3:
            a = self.motion.rotate(self.axis, t)
            a = a / np.linalg.norm(a)
            r = r - np.outer(r @ a, a)
        return np.einsum("na,na->n", r, r) <= self.radius**2


def apply_colliders(grid: SparseGrid, colliders, t: float) -> SparseGrid:
    x = grid.positions
    grid.dirichlet = np.zeros(grid.num_nodes, dtype=bool)
    grid.dirichlet_velocity = np.zeros_like(grid.velocity)
    for col in colliders:
        inside = col.contains(x, t)
        if np.any(inside):
            grid.dirichlet |= inside
            grid.dirichlet_velocity[inside] = col.motion.velocity_at(x[inside], t)
    return grid
