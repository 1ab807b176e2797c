"""Block-sparse matrices in diagonal (fixed stencil offset) storage.

Row i holds one d x d block per lattice offset o in a fixed table; the
column of slot k is the node at coords[i] + offsets[k], or -1 when that
node is inactive.
"""

from __future__ import annotations

import itertools

import numpy as np

from .grid_kernels import LatticeIndex


def offset_table(radius: int, dim: int) -> np.ndarray:
    return np.array(list(itertools.product(range(-radius, radius + 1), repeat=dim)), dtype=np.int64)


class BlockSparseMatrix:
    def __init__(self, coords: np.ndarray, index: LatticeIndex, radius: int):
        self.coords = np.asarray(coords, dtype=np.int64)
        self.index = index
        self.radius = int(radius)
        n, d = self.coords.shape
        self.dim = d
        self.offsets = offset_table(self.radius, d)
        self.center = len(self.offsets) // 2
        self.cols = index.lookup(self.coords[:, None, :] + self.offsets[None, :, :]) if n else \
            np.zeros((0, len(self.offsets)), dtype=np.int64)
        self.blocks = np.zeros((n, len(self.offsets), d, d))
        self._safe_cols = np.where(self.cols < 0, 0, self.cols)

    @property
    def num_rows(self) -> int:
        return self.coords.shape[0]

    @property
    def shape(self):
        n = self.num_rows * self.dim
        return (n, n)

    def copy(self) -> "BlockSparseMatrix":
        out = BlockSparseMatrix.__new__(BlockSparseMatrix)
        out.__dict__.update(self.__dict__)
        out.blocks = self.blocks.copy()
        return out

    def slot_of(self, delta: np.ndarray) -> np.ndarray:
        """Slot index of lattice offsets `delta` (..., d); -1 outside the table."""
        delta = np.asarray(delta, dtype=np.int64)
        w = 2 * self.radius + 1
        inside = np.all(np.abs(delta) <= self.radius, axis=-1)
        lin = np.zeros(delta.shape[:-1], dtype=np.int64)
        for a in range(self.dim):
            lin = lin * w + (delta[..., a] + self.radius)
        return np.where(inside, lin, -1)

    def accumulate(self, rows: np.ndarray, cols: np.ndarray, vals: np.ndarray):
        """Add d x d blocks at (row node, column node); deterministic summation order."""
        rows = np.asarray(rows, dtype=np.int64).ravel()
        cols = np.asarray(cols, dtype=np.int64).ravel()
        d = self.dim
        vals = np.asarray(vals, dtype=float).reshape(-1, d * d)
        slots = self.slot_of(self.coords[cols] - self.coords[rows])
        if np.any(slots < 0):
            raise ValueError("block outside the stencil offset table (stencil overflow)")
        K = len(self.offsets)
        flat = rows * K + slots
        size = self.num_rows * K
        acc = np.empty((size, d * d))
        for c in range(d * d):
            acc[:, c] = np.bincount(flat, weights=vals[:, c], minlength=size)
        self.blocks += acc.reshape(self.blocks.shape)

    def matvec(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float).reshape(self.num_rows, self.dim)
        if self.num_rows == 0:
            return u.copy()
        return np.einsum("nkab,nkb->na", self.blocks, u[self._safe_cols], optimize=True)

    __matmul__ = matvec

    def diagonal_blocks(self) -> np.ndarray:
        return self.blocks[:, self.center]

    def scalar_diagonal(self) -> np.ndarray:
        return np.einsum("naa->na", self.diagonal_blocks()).copy()

    def nonzero_blocks_per_row(self) -> np.ndarray:
        nz = np.any(self.blocks != 0.0, axis=(2, 3)) & (self.cols >= 0)
        return nz.sum(axis=1)

    def used_radius(self) -> int:
        nz = np.any(self.blocks != 0.0, axis=(2, 3)) & (self.cols >= 0)
        used = nz.any(axis=0)
        if not used.any():
            return 0
        return int(np.abs(self.offsets[used]).max())

    def project_dirichlet(self, mask: np.ndarray):
        """Identity rows/columns on masked nodes, in place."""
        mask = np.asarray(mask, dtype=bool)
        if not mask.any():
            return
        col_fixed = (self.cols >= 0) & mask[self._safe_cols]
        self.blocks[mask] = 0.0
        self.blocks[col_fixed] = 0.0
        self.blocks[mask, self.center] = np.eye(self.dim)

    def to_dense(self) -> np.ndarray:
        n, d = self.num_rows, self.dim
        A = np.zeros((n, d, n, d))
        r, k = np.nonzero(self.cols >= 0)
        np.add.at(A, (r, slice(None), self.cols[r, k], slice(None)), self.blocks[r, k])
        return A.reshape(n * d, n * d)

    def symmetry_error(self) -> float:
        """max |A_ij - A_ji^T| over stored blocks, relative to max |A|."""
        n = self.num_rows
        if n == 0:
            return 0.0
        r, k = np.nonzero(self.cols >= 0)
        c = self.cols[r, k]
        kt = self.slot_of(self.coords[r] - self.coords[c])
        other = self.blocks[c, kt]
        err = np.abs(self.blocks[r, k] - np.swapaxes(other, -1, -2)).max(initial=0.0)
        return float(err / max(np.abs(self.blocks).max(), 1e-300))
