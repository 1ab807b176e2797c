"""Node-embedding Galerkin multigrid and its V-cycle.

Fine nodes are treated as particles of the next coarser grid (spacing
doubled). Their embedding weights define restriction R; prolongation is
R^T and coarse operators are the Galerkin products R H R^T.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .grid_kernels import KernelKind, LatticeIndex, point_stencils
from .krylov import CGResult, jacobi, pcg
from .sparse import BlockSparseMatrix

log = logging.getLogger(__name__)

COARSE_CG_CAP = 10_000
COARSE_REL_TOL = 0.5
PINNED_REL_TOL = 1e-13


@dataclass
class RestrictionOperator:
    """Embedding of fine nodes into coarse nodes: (nf, K) indices and weights."""

    coarse: np.ndarray
    weights: np.ndarray
    num_coarse: int

    @property
    def num_fine(self) -> int:
        return self.coarse.shape[0]

    def restrict(self, r: np.ndarray) -> np.ndarray:
        d = r.shape[1]
        flat = self.coarse.ravel()
        vals = (self.weights[..., None] * r[:, None, :]).reshape(-1, d)
        out = np.empty((self.num_coarse, d))
        for a in range(d):
            out[:, a] = np.bincount(flat, weights=vals[:, a], minlength=self.num_coarse)
        return out

    def prolong(self, u: np.ndarray) -> np.ndarray:
        return np.einsum("fk,fka->fa", self.weights, u[self.coarse])

    def entries_per_fine_node(self) -> np.ndarray:
        return np.count_nonzero(self.weights > 0, axis=1)

    def entries_per_coarse_node(self) -> np.ndarray:
        return np.bincount(self.coarse[self.weights > 0], minlength=self.num_coarse)

    def to_dense(self, dim: int) -> np.ndarray:
        """Scalar restriction expanded with I_d: (nc*d, nf*d)."""
        Rs = np.zeros((self.num_coarse, self.num_fine))
        f, k = np.nonzero(self.weights > 0)
        np.add.at(Rs, (self.coarse[f, k], f), self.weights[f, k])
        return np.kron(Rs, np.eye(dim))


@dataclass
class CoarseGrid:
    coords: np.ndarray
    index: LatticeIndex

    @property
    def num_nodes(self) -> int:
        return self.coords.shape[0]


def build_restriction(fine_coords: np.ndarray, kind: KernelKind = KernelKind.LINEAR):
    """Coarse lattice (spacing x2) touched by the fine nodes, and the embedding."""
    fine_coords = np.asarray(fine_coords, dtype=np.int64)
    if len(fine_coords) == 0:
        raise ValueError("cannot coarsen an empty grid")
    dim = fine_coords.shape[1]
    ccoords, w, _ = point_stencils(kind, fine_coords.astype(float), 2.0)
    active = w > 0
    index = LatticeIndex(np.unique(ccoords[active], axis=0), dim)
    idx = index.lookup(ccoords)
    idx = np.where(active, idx, 0)
    w = np.where(active, w, 0.0)
    R = RestrictionOperator(coarse=idx, weights=w, num_coarse=len(index.keys))
    return CoarseGrid(coords=index.coords, index=index), R


def coarse_radius(fine_radius: int, kind: KernelKind) -> int:
    support = 1 if kind is KernelKind.LINEAR else 2
    return (2 * support + fine_radius) // 2


def galerkin_coarsen(H: BlockSparseMatrix, R: RestrictionOperator, coarse: CoarseGrid,
                     kind: KernelKind = KernelKind.LINEAR) -> BlockSparseMatrix:
    """R H R^T in diagonal storage of the coarse stencil."""
    Hc = BlockSparseMatrix(coarse.coords, coarse.index, coarse_radius(H.radius, kind))
    d = H.dim
    for k in range(len(H.offsets)):
        rows = np.nonzero((H.cols[:, k] >= 0) & np.any(H.blocks[:, k] != 0.0, axis=(1, 2)))[0]
        if len(rows) == 0:
            continue
        cols = H.cols[rows, k]
        wi, wl = R.weights[rows], R.weights[cols]
        pair = (wi[:, :, None] > 0) & (wl[:, None, :] > 0)
        ww = wi[:, :, None] * wl[:, None, :]
        vals = ww[..., None, None] * H.blocks[rows, k][:, None, None]
        ci = np.broadcast_to(R.coarse[rows][:, :, None], pair.shape)[pair]
        cj = np.broadcast_to(R.coarse[cols][:, None, :], pair.shape)[pair]
        Hc.accumulate(ci, cj, vals[pair].reshape(-1, d, d))
    return Hc


def color_classes(coords: np.ndarray, modulus: int) -> list[np.ndarray]:
    """Partition nodes so that same-color nodes are > modulus-1 apart on some axis."""
    c = np.mod(coords, modulus)
    color = np.zeros(len(coords), dtype=np.int64)
    for a in range(coords.shape[1]):
        color = color * modulus + c[:, a]
    order = np.argsort(color, kind="stable")
    bounds = np.searchsorted(color[order], np.arange(modulus ** coords.shape[1] + 1))
    return [order[bounds[i]:bounds[i + 1]] for i in range(len(bounds) - 1) if bounds[i + 1] > bounds[i]]


class SGSSmoother:
    """Colored block symmetric Gauss-Seidel on a BlockSparseMatrix."""

    def __init__(self, H: BlockSparseMatrix):
        self.H = H
        diag = H.diagonal_blocks()
        det = np.linalg.det(diag) if len(diag) else np.zeros(0)
        scale = np.abs(diag).max(axis=(1, 2)) ** H.dim if len(diag) else np.zeros(0)
        if np.any(~(np.abs(det) > 1e-14 * scale)):
            raise np.linalg.LinAlgError("singular diagonal block in Gauss-Seidel smoother")
        self.dinv = np.linalg.inv(diag) if len(diag) else diag
        self.modulus = H.used_radius() + 1
        self.colors = color_classes(H.coords, max(self.modulus, 2))
        self._off = H.blocks.copy()
        self._off[:, H.center] = 0.0

    def _update(self, idx, u, b):
        H = self.H
        nb = u[H._safe_cols[idx]]
        r = b[idx] - np.einsum("nkab,nkb->na", self._off[idx], nb, optimize=True)
        u[idx] = np.einsum("nab,nb->na", self.dinv[idx], r)

    def __call__(self, u: np.ndarray, b: np.ndarray, sweeps: int = 1) -> np.ndarray:
        u = np.array(u, dtype=float)
        for _ in range(sweeps):
            for idx in self.colors:
                self._update(idx, u, b)
            for idx in reversed(self.colors):
                self._update(idx, u, b)
        return u


def smooth_sgs(H: BlockSparseMatrix, u: np.ndarray, b: np.ndarray, sweeps: int = 1) -> np.ndarray:
    return SGSSmoother(H)(u, b, sweeps)


def coarse_solve(H: BlockSparseMatrix, b: np.ndarray, D: np.ndarray | None = None,
                 rel_tol: float = COARSE_REL_TOL, cap: int = COARSE_CG_CAP,
                 fixed: np.ndarray | None = None) -> CGResult:
    """Jacobi-PCG from zero until sqrt(r^T D^-1 r) <= rel_tol * sqrt(b^T D^-1 b)."""
    D = H.scalar_diagonal() if D is None else D
    res = pcg(H.matvec, jacobi(D), b, rel_tol, cap, fixed)
    if not res.converged:
        log.warning("coarse solve hit the iteration cap (%d)", cap)
    return res


@dataclass
class Level:
    H: BlockSparseMatrix
    dirichlet: np.ndarray
    smoother: SGSSmoother | None = None
    diag: np.ndarray | None = None
    R: RestrictionOperator | None = None   # to the next coarser level


@dataclass
class MultigridHierarchy:
    levels: list[Level]
    kind: KernelKind = KernelKind.LINEAR
    coarse_rel_tol: float = COARSE_REL_TOL
    coarse_cap: int = COARSE_CG_CAP
    stats: dict = field(default_factory=lambda: {"vcycles": 0, "coarse_iterations": 0})

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    def node_counts(self) -> list[int]:
        return [lv.H.num_rows for lv in self.levels]

    def mean_blocks_per_row(self) -> list[float]:
        return [float(lv.H.nonzero_blocks_per_row().mean()) if lv.H.num_rows else 0.0
                for lv in self.levels]

    def pinned(self) -> "MultigridHierarchy":
        """Same hierarchy with an (effectively) exact coarse solve, making vcycle linear."""
        return MultigridHierarchy(self.levels, self.kind, PINNED_REL_TOL, self.coarse_cap, self.stats)


def build_hierarchy(H0: BlockSparseMatrix, dirichlet0: np.ndarray, num_levels: int = 3,
                    kind: KernelKind = KernelKind.LINEAR,
                    coarse_rel_tol: float = COARSE_REL_TOL) -> MultigridHierarchy:
    """Galerkin hierarchy over H0 (aliased, not copied)."""
    if num_levels < 1:
        raise ValueError("need at least one level")
    kind = KernelKind.parse(kind)
    levels = [Level(H=H0, dirichlet=np.asarray(dirichlet0, dtype=bool))]
    for m in range(1, num_levels):
        fine = levels[-1]
        coarse, R = build_restriction(fine.H.coords, kind)
        if coarse.num_nodes == 0 or coarse.num_nodes >= fine.H.num_rows:
            log.warning("coarsening stalled at level %d; using %d levels", m, m)
            break
        Hc = galerkin_coarsen(fine.H, R, coarse, kind)
        touched = np.zeros(coarse.num_nodes, dtype=bool)
        fd = fine.dirichlet[:, None] & (R.weights > 0)
        touched[R.coarse[fd]] = True
        Hc.project_dirichlet(touched)
        fine.R = R
        levels.append(Level(H=Hc, dirichlet=touched))
    for i, lv in enumerate(levels):
        if i < len(levels) - 1:
            lv.smoother = SGSSmoother(lv.H)
        else:
            lv.diag = lv.H.scalar_diagonal()
    return MultigridHierarchy(levels, kind, coarse_rel_tol)


def vcycle(hier: MultigridHierarchy, b0: np.ndarray) -> np.ndarray:
    """One V-cycle approximating H0^-1 b0; zero on Dirichlet nodes."""
    levels = hier.levels
    M = len(levels)
    b = [np.array(b0, dtype=float)]
    b[0][levels[0].dirichlet] = 0.0
    u = [None] * M
    for m in range(M - 1):
        lv = levels[m]
        u[m] = lv.smoother(np.zeros_like(b[m]), b[m])
        bc = lv.R.restrict(b[m] - lv.H.matvec(u[m]))
        bc[levels[m + 1].dirichlet] = 0.0
        b.append(bc)
    last = levels[-1]
    res = coarse_solve(last.H, b[-1], last.diag, hier.coarse_rel_tol, hier.coarse_cap, last.dirichlet)
    u[-1] = res.x
    hier.stats["vcycles"] += 1
    hier.stats["coarse_iterations"] += res.iterations
    for m in range(M - 2, -1, -1):
        lv = levels[m]
        u[m] = u[m] + lv.R.prolong(u[m + 1])
        u[m] = lv.smoother(u[m], b[m])
    out = u[0]
    out[levels[0].dirichlet] = 0.0
    return out
