"""Preconditioned conjugate gradients with the energy-norm stopping rule."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


class IndefiniteError(RuntimeError):
    """CG met a direction of non-positive curvature."""


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    converged: bool


def pcg(apply_A: Callable, apply_precond: Callable, b: np.ndarray, rel_tol: float,
        cap: int = 10_000, fixed: np.ndarray | None = None) -> CGResult:
    """Solve A x = b from x = 0.

    Stops once sqrt(r^T z) <= rel_tol * sqrt(r0^T z0), z = precond(r), or
    after `cap` iterations. Rows flagged in `fixed` stay zero.
    """
    b = np.array(b, dtype=float)
    if fixed is not None:
        b[fixed] = 0.0
    x = np.zeros_like(b)
    r = b.copy()
    z = apply_precond(r)
    rz = float(np.vdot(r, z))
    if rz <= 0.0:
        if rz < 0.0:
            raise IndefiniteError("preconditioner is not positive definite")
        return CGResult(x, 0, True)
    target = rel_tol * np.sqrt(rz)
    p = z.copy()
    for it in range(1, cap + 1):
        Ap = apply_A(p)
        pAp = float(np.vdot(p, Ap))
        if not pAp > 0.0:
            raise IndefiniteError(f"p^T A p = {pAp:g} at CG iteration {it}")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if fixed is not None:
            r[fixed] = 0.0
        z = apply_precond(r)
        rz_new = float(np.vdot(r, z))
        if rz_new < 0.0:
            raise IndefiniteError("preconditioner is not positive definite")
        if np.sqrt(rz_new) <= target:
            return CGResult(x, it, True)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return CGResult(x, cap, False)


def jacobi(diag: np.ndarray) -> Callable:
    inv = 1.0 / np.asarray(diag, dtype=float)
    return lambda r: r * inv
