"""Lattice and kernel primitives: B-spline weights, sparse grid activation, CFL step."""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np

CFL_FACTOR = 0.6


class KernelKind(enum.Enum):
    QUADRATIC = "quadratic"
    LINEAR = "linear"

    @property
    def width(self) -> int:
        return 3 if self is KernelKind.QUADRATIC else 2

    @property
    def radius(self) -> float:
        return 1.5 if self is KernelKind.QUADRATIC else 1.0

    @classmethod
    def parse(cls, name) -> "KernelKind":
        if isinstance(name, cls):
            return name
        aliases = {"quadratic": cls.QUADRATIC, "quadraticbspline": cls.QUADRATIC,
                   "linear": cls.LINEAR}
        try:
            return aliases[str(name).lower()]
        except KeyError:
            raise ValueError(f"unknown kernel kind {name!r}") from None


def _weight_1d(kind: KernelKind, x: np.ndarray) -> np.ndarray:
    a = np.abs(x)
    if kind is KernelKind.QUADRATIC:
        return np.where(a < 0.5, 0.75 - a * a,
                        np.where(a < 1.5, 0.5 * (1.5 - a) ** 2, 0.0))
    return np.where(a < 1.0, 1.0 - a, 0.0)


def _dweight_1d(kind: KernelKind, x: np.ndarray) -> np.ndarray:
    a = np.abs(x)
    if kind is KernelKind.QUADRATIC:
        return np.where(a < 0.5, -2.0 * x,
                        np.where(a < 1.5, -np.sign(x) * (1.5 - a), 0.0))
    # derivative from the right at every kink, so slopes still sum to zero on lattice points
    s = np.where(x >= 0.0, -1.0, 1.0)
    return np.where((x >= -1.0) & (x < 1.0), s, 0.0)


def kernel_weight(kind: KernelKind, offset) -> np.ndarray:
    """Tensor-product kernel weight; `offset` is (..., d) in cell units."""
    offset = np.asarray(offset, dtype=float)
    if offset.ndim == 0:
        offset = offset[None]
    return np.prod(_weight_1d(kind, offset), axis=-1)


def kernel_gradient(kind: KernelKind, offset, dx: float) -> np.ndarray:
    """Gradient of the weight w.r.t. particle position, (..., d) in 1/m.

    `offset` is (x_p - x_i) / dx.
    """
    if dx <= 0:
        raise ValueError("dx must be positive")
    offset = np.asarray(offset, dtype=float)
    if offset.ndim == 0:
        offset = offset[None]
    w = _weight_1d(kind, offset)
    dw = _dweight_1d(kind, offset)
    d = offset.shape[-1]
    out = np.empty_like(offset)
    for a in range(d):
        term = dw[..., a]
        for b in range(d):
            if b != a:
                term = term * w[..., b]
        out[..., a] = term
    return out / dx


def stencil_base(kind: KernelKind, xs: np.ndarray) -> np.ndarray:
    """Lowest lattice coordinate of each point's stencil; `xs` in cell units."""
    if kind is KernelKind.QUADRATIC:
        return np.floor(xs + 0.5).astype(np.int64) - 1
    return np.floor(xs).astype(np.int64)


def stencil_offsets(kind: KernelKind, dim: int) -> np.ndarray:
    return np.array(list(itertools.product(range(kind.width), repeat=dim)), dtype=np.int64)


class LatticeIndex:
    """Sorted-key spatial hash from integer lattice coordinates to node indices.

    Keys are row-major linearizations, so sorting keys sorts coordinates
    lexicographically.
    """

    def __init__(self, coords: np.ndarray, dim: int):
        coords = np.asarray(coords, dtype=np.int64).reshape(-1, dim)
        self.dim = dim
        if len(coords):
            self.lo = coords.min(axis=0) - 8
            span = coords.max(axis=0) + 8 - self.lo + 1
        else:
            self.lo = np.zeros(dim, dtype=np.int64)
            span = np.ones(dim, dtype=np.int64)
        self.strides = np.ones(dim, dtype=np.int64)
        for a in range(dim - 2, -1, -1):
            self.strides[a] = self.strides[a + 1] * span[a + 1]
        self.span = span
        keys = self.key(coords)
        order = np.argsort(keys, kind="stable")
        self.keys = keys[order]
        self.coords = coords[order]

    def key(self, coords: np.ndarray) -> np.ndarray:
        return ((np.asarray(coords, dtype=np.int64) - self.lo) * self.strides).sum(axis=-1)

    def lookup(self, coords: np.ndarray) -> np.ndarray:
        """Node index for each coordinate, -1 where inactive."""
        coords = np.asarray(coords, dtype=np.int64)
        shape = coords.shape[:-1]
        c = coords.reshape(-1, self.dim)
        inside = np.all((c >= self.lo) & (c < self.lo + self.span), axis=1)
        k = self.key(np.where(inside[:, None], c, self.lo))
        pos = np.searchsorted(self.keys, k)
        pos = np.minimum(pos, max(len(self.keys) - 1, 0))
        if len(self.keys) == 0:
            return np.full(shape, -1, dtype=np.int64)
        hit = inside & (self.keys[pos] == k)
        return np.where(hit, pos, -1).reshape(shape)


@dataclass
class SparseGrid:
    """Active nodes of a node-centered background grid plus nodal state."""

    dx: float
    coords: np.ndarray
    index: LatticeIndex = field(repr=False)
    mass: np.ndarray = None
    momentum: np.ndarray = None
    velocity: np.ndarray = None
    dirichlet: np.ndarray = None
    dirichlet_velocity: np.ndarray = None

    def __post_init__(self):
        n, d = self.coords.shape
        if self.mass is None:
            self.mass = np.zeros(n)
        if self.momentum is None:
            self.momentum = np.zeros((n, d))
        if self.velocity is None:
            self.velocity = np.zeros((n, d))
        if self.dirichlet is None:
            self.dirichlet = np.zeros(n, dtype=bool)
        if self.dirichlet_velocity is None:
            self.dirichlet_velocity = np.zeros((n, d))

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def num_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def positions(self) -> np.ndarray:
        return self.coords * self.dx

    def lookup(self, coords) -> np.ndarray:
        return self.index.lookup(coords)

    @classmethod
    def from_coords(cls, coords: np.ndarray, dx: float, dim: int) -> "SparseGrid":
        index = LatticeIndex(np.unique(np.asarray(coords, dtype=np.int64).reshape(-1, dim), axis=0), dim)
        return cls(dx=dx, coords=index.coords, index=index)


def point_stencils(kind: KernelKind, points: np.ndarray, dx: float):
    """Candidate lattice nodes, weights and gradients for every point.

    Returns (coords (P,K,d), weights (P,K), gradients (P,K,d)).
    """
    points = np.asarray(points, dtype=float)
    dim = points.shape[1]
    xs = points / dx
    base = stencil_base(kind, xs)
    offs = stencil_offsets(kind, dim)
    coords = base[:, None, :] + offs[None, :, :]
    rel = xs[:, None, :] - coords
    return coords, kernel_weight(kind, rel), kernel_gradient(kind, rel, dx)


def activate_grid(positions, dx: float, kind: KernelKind = KernelKind.QUADRATIC) -> SparseGrid:
    """Grid whose active nodes are exactly those touched by some particle."""
    if dx <= 0:
        raise ValueError("dx must be positive")
    positions = np.asarray(positions, dtype=float)
    if positions.ndim != 2 or positions.shape[1] not in (2, 3):
        raise ValueError("positions must be (n, 2) or (n, 3)")
    if not np.all(np.isfinite(positions)):
        raise ValueError("non-finite particle position")
    dim = positions.shape[1]
    if len(positions) == 0:
        return SparseGrid.from_coords(np.zeros((0, dim), dtype=np.int64), dx, dim)
    coords, w, _ = point_stencils(kind, positions, dx)
    return SparseGrid.from_coords(coords[w > 0.0], dx, dim)


def cfl_dt(v_max: float, dx: float, fps: float) -> float:
    if dx <= 0 or fps <= 0 or v_max < 0:
        raise ValueError("cfl_dt needs dx > 0, fps > 0, v_max >= 0")
    frame = 1.0 / fps
    if v_max == 0:
        return frame
    return min(frame, CFL_FACTOR * dx / v_max)
