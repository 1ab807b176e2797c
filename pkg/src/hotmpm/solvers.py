"""Nonlinear grid-step solvers: HOT, PN-PCG (assembled / matrix-free), PN-MGPCG, LBFGS-H.

All solvers minimize the same incremental potential and stop on the same
test, scaled_norm(g) <= eps * sqrt(n_node).
"""

from __future__ import annotations

import enum
import logging
import time
from collections import deque
from dataclasses import dataclass, field, fields
from typing import Callable

import numpy as np

from .grid_kernels import KernelKind
from .krylov import CGResult, IndefiniteError, jacobi, pcg
from .multigrid import MultigridHierarchy, build_hierarchy, vcycle
from .objective import MatrixFreeHessian, NodeCN, ObjectiveState, assemble_hessian, energy, \
    gradient, projected_stress_derivatives, scaled_norm

log = logging.getLogger(__name__)

__all__ = [
    "SolverKind", "SolverConfig", "SolverError", "LineSearchError", "DiagnosticsRecord",
    "LBFGSHistory", "SolveResult", "pcg", "line_search", "lbfgs_direction", "inexactness",
    "solve_hot", "solve_pn_pcg", "solve_pn_mgpcg", "solve_lbfgs_h", "solve", "step_grid",
]


class SolverKind(enum.Enum):
    HOT = "hot"
    PN_PCG = "pn-pcg"
    PN_PCG_MF = "pn-pcg-mf"
    PN_MGPCG = "pn-mgpcg"
    LBFGS_H = "lbfgs-h"

    @classmethod
    def names(cls) -> list[str]:
        return [k.value for k in cls]


@dataclass
class SolverConfig:
    eps: float = 1e-7
    tau: float | None = None
    levels: int = 3
    window: int = 8
    ls_shrink: float = 0.5
    ls_c: float = 1e-4
    ls_max: int = 30
    cg_cap: int = 10_000
    max_outer: int = 1000
    curvature_floor: float = 1e-12
    solver: SolverKind = SolverKind.HOT
    embedding: KernelKind = KernelKind.LINEAR

    def __post_init__(self):
        self.solver = SolverKind(self.solver) if not isinstance(self.solver, SolverKind) else self.solver
        self.embedding = KernelKind.parse(self.embedding)
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if self.tau is not None and self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.window < 1 or self.levels < 1:
            raise ValueError("window and levels must be >= 1")


class SolverError(RuntimeError):
    def __init__(self, msg, dv=None, records=None):
        super().__init__(msg)
        self.dv = dv
        self.records = records or []


class LineSearchError(SolverError):
    pass


@dataclass
class DiagnosticsRecord:
    frame: int
    step: int
    iteration: int
    scaled_residual: float
    energy: float
    alpha: float
    inner_iterations: int
    work_units: float
    wall_time: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def row(self) -> list:
        return [getattr(self, c) for c in self.columns()]


@dataclass
class SolveResult:
    dv: np.ndarray
    iterations: int
    records: list[DiagnosticsRecord]
    residual: float
    tolerance: float
    cg_iterations: int = 0
    vcycles: int = 0
    rebuilds: int = 0
    energies: list[float] = field(default_factory=list)


class LBFGSHistory:
    """Ring buffer of secant pairs (s, y, rho = 1 / y^T s)."""

    def __init__(self, window: int, curvature_floor: float = 1e-12):
        self.window = window
        self.floor = curvature_floor
        self.pairs: deque = deque(maxlen=window)
        self.skipped = 0

    def __len__(self):
        return len(self.pairs)

    def push(self, s: np.ndarray, y: np.ndarray) -> bool:
        ys = float(np.vdot(y, s))
        if not ys > self.floor * np.linalg.norm(y) * np.linalg.norm(s):
            self.skipped += 1
            return False
        self.pairs.append((s.copy(), y.copy(), 1.0 / ys))
        return True

    def clear(self):
        self.pairs.clear()


def lbfgs_direction(g: np.ndarray, history: LBFGSHistory, initializer: Callable) -> np.ndarray:
    """Two-loop recursion with `initializer` as the inner inverse-Hessian guess."""
    q = -np.asarray(g, dtype=float)
    alphas = []
    for s, y, rho in reversed(history.pairs):
        a = rho * float(np.vdot(s, q))
        q = q - a * y
        alphas.append(a)
    r = initializer(q)
    for (s, y, rho), a in zip(history.pairs, reversed(alphas)):
        beta = rho * float(np.vdot(y, r))
        r = r + (a - beta) * s
    return r


def line_search(state: ObjectiveState, dv: np.ndarray, p: np.ndarray, E0: float | None = None,
                g: np.ndarray | None = None, shrink: float = 0.5, c: float = 1e-4,
                max_halvings: int = 30) -> tuple[float, float]:
    """Backtracking Armijo search from alpha = 1. Returns (alpha, E(dv + alpha p))."""
    g = gradient(state, dv) if g is None else g
    slope = float(np.vdot(g, p))
    if not slope < 0.0:
        raise ValueError(f"not a descent direction (g^T p = {slope:g})")
    E0 = energy(state, dv) if E0 is None else E0
    alpha = 1.0
    for _ in range(max_halvings + 1):
        E1 = energy(state, dv + alpha * p)
        if E1 <= E0 + c * alpha * slope:
            return alpha, E1
        alpha *= shrink
    raise LineSearchError(f"line search failed after {max_halvings} halvings (g^T p = {slope:g})", dv)


def inexactness(energy_norm: float, tau: float) -> float:
    """Relative CG tolerance min(0.5, sqrt(max(energy_norm, tau)))."""
    return min(0.5, float(np.sqrt(max(energy_norm, tau))))


class _Run:
    """Shared outer-loop bookkeeping."""

    def __init__(self, state, config, cn, frame, step, deterministic):
        self.state = state
        self.config = config
        self.cn = cn
        self.frame, self.step = frame, step
        self.deterministic = deterministic
        self.tol = config.eps * np.sqrt(state.num_nodes)
        self.records: list[DiagnosticsRecord] = []
        self.work = 0.0
        self.t0 = time.perf_counter()
        self.dv = state.initial_dv()
        self.g = gradient(state, self.dv)
        self.E = energy(state, self.dv)
        self.res = scaled_norm(self.g, cn)
        self.energies = [self.E]
        self.it = 0

    @property
    def converged(self) -> bool:
        return self.res <= self.tol

    def tau(self) -> float:
        if self.config.tau is not None:
            return self.config.tau
        return self.tol * float(self.cn.scale.max())

    def accept(self, p, alpha, E1, inner):
        self.dv = self.dv + alpha * p
        g_new = gradient(self.state, self.dv)
        self.E = E1
        self.energies.append(E1)
        self.it += 1
        self.res = scaled_norm(g_new, self.cn)
        wall = 0.0 if self.deterministic else time.perf_counter() - self.t0
        self.records.append(DiagnosticsRecord(self.frame, self.step, self.it, self.res, E1, alpha,
                                              int(inner), self.work, wall))
        g_old, self.g = self.g, g_new
        return g_old

    def search(self, p):
        c = self.config
        try:
            return line_search(self.state, self.dv, p, self.E, self.g, c.ls_shrink, c.ls_c, c.ls_max)
        except LineSearchError as exc:
            raise LineSearchError(str(exc), self.dv, self.records) from None

    def check_cap(self):
        if self.it >= self.config.max_outer:
            raise SolverError(f"outer iteration cap {self.config.max_outer} reached "
                              f"(residual {self.res:.3e} > {self.tol:.3e})", self.dv, self.records)

    def result(self, **kw) -> SolveResult:
        return SolveResult(dv=self.dv, iterations=self.it, records=self.records, residual=self.res,
                           tolerance=self.tol, energies=self.energies, **kw)


def _vcycle_work(hier: MultigridHierarchy) -> tuple[float, float]:
    """Cost of one V-cycle (without the coarse solve) and of one coarse CG
    iteration, in units of one fine-level Jacobi-PCG iteration (block nnz)."""
    nnz = [max(int(lv.H.nonzero_blocks_per_row().sum()), 1) for lv in hier.levels]
    base = nnz[0]
    # per smoothed level: 2 SGS sweeps (4 passes) + residual matvec
    smooth = sum(5.0 * nnz[m] / base for m in range(len(nnz) - 1))
    return smooth, nnz[-1] / base


def solve_hot(state: ObjectiveState, config: SolverConfig, cn: NodeCN, frame: int = 0, step: int = 0,
              deterministic: bool = False) -> SolveResult:
    """L-BFGS with a start-of-step multigrid V-cycle as inner initializer."""
    run = _Run(state, config, cn, frame, step, deterministic)
    if run.converged:
        return run.result()
    H = assemble_hessian(state, run.dv)
    hier = build_hierarchy(H, state.dirichlet, config.levels, config.embedding)
    smooth_cost, coarse_cost = _vcycle_work(hier)
    history = LBFGSHistory(config.window, config.curvature_floor)

    def initializer(q):
        return vcycle(hier, q)

    while not run.converged:
        run.check_cap()
        before = hier.stats["coarse_iterations"]
        p = lbfgs_direction(run.g, history, initializer)
        if not float(np.vdot(run.g, p)) < 0.0:
            log.debug("L-BFGS direction not descending; resetting history")
            history.clear()
            p = initializer(-run.g)
        run.work += smooth_cost + coarse_cost * (hier.stats["coarse_iterations"] - before)
        alpha, E1 = run.search(p)
        dv_old = run.dv
        g_old = run.accept(p, alpha, E1, 1)
        history.push(run.dv - dv_old, run.g - g_old)
    return run.result(vcycles=hier.stats["vcycles"], rebuilds=1,
                      cg_iterations=hier.stats["coarse_iterations"])


def solve_lbfgs_h(state: ObjectiveState, config: SolverConfig, cn: NodeCN, frame: int = 0, step: int = 0,
                  deterministic: bool = False) -> SolveResult:
    """Single-level HOT: the initializer is Jacobi-PCG on the full start-of-step Hessian."""
    cfg = SolverConfig(**{**config.__dict__, "levels": 1})
    return solve_hot(state, cfg, cn, frame, step, deterministic)


def solve_pn_pcg(state: ObjectiveState, config: SolverConfig, cn: NodeCN, matrix_free: bool = False,
                 frame: int = 0, step: int = 0, deterministic: bool = False) -> SolveResult:
    """Projected Newton with Jacobi-preconditioned, adaptively inexact CG."""
    run = _Run(state, config, cn, frame, step, deterministic)
    total_cg = 0
    tau = run.tau()
    while not run.converged:
        run.check_cap()
        A = projected_stress_derivatives(state, run.dv)
        if matrix_free:
            op = MatrixFreeHessian(state, run.dv, A)
            diag = op.scalar_diagonal()
        else:
            op = assemble_hessian(state, run.dv, A)
            diag = op.scalar_diagonal()
        precond = jacobi(diag)
        r0 = -run.g
        k = inexactness(np.sqrt(float(np.vdot(r0, precond(r0)))), tau)
        cg = pcg(op.matvec, precond, r0, k, config.cg_cap, state.dirichlet)
        total_cg += cg.iterations
        run.work += cg.iterations
        alpha, E1 = run.search(cg.x)
        run.accept(cg.x, alpha, E1, cg.iterations)
    return run.result(cg_iterations=total_cg)


def solve_pn_mgpcg(state: ObjectiveState, config: SolverConfig, cn: NodeCN, frame: int = 0, step: int = 0,
                   deterministic: bool = False) -> SolveResult:
    """Projected Newton with V-cycle-preconditioned CG; hierarchy rebuilt every outer iteration."""
    run = _Run(state, config, cn, frame, step, deterministic)
    total_cg = vcycles = rebuilds = 0
    tau = run.tau()
    while not run.converged:
        run.check_cap()
        H = assemble_hessian(state, run.dv)
        hier = build_hierarchy(H, state.dirichlet, config.levels, config.embedding).pinned()
        rebuilds += 1
        smooth_cost, coarse_cost = _vcycle_work(hier)

        def precond(r):
            return vcycle(hier, r)

        r0 = -run.g
        k = inexactness(np.sqrt(float(np.vdot(r0, precond(r0)))), tau)
        cg = pcg(H.matvec, precond, r0, k, config.cg_cap, state.dirichlet)
        total_cg += cg.iterations
        vcycles += hier.stats["vcycles"]
        run.work += cg.iterations * (1.0 + smooth_cost) + coarse_cost * hier.stats["coarse_iterations"]
        alpha, E1 = run.search(cg.x)
        run.accept(cg.x, alpha, E1, cg.iterations)
    return run.result(cg_iterations=total_cg, vcycles=vcycles, rebuilds=rebuilds)


def solve(state: ObjectiveState, config: SolverConfig, cn: NodeCN, frame: int = 0, step: int = 0,
          deterministic: bool = False) -> SolveResult:
    kind = config.solver
    kw = dict(frame=frame, step=step, deterministic=deterministic)
    if kind is SolverKind.HOT:
        return solve_hot(state, config, cn, **kw)
    if kind is SolverKind.LBFGS_H:
        return solve_lbfgs_h(state, config, cn, **kw)
    if kind is SolverKind.PN_PCG:
        return solve_pn_pcg(state, config, cn, False, **kw)
    if kind is SolverKind.PN_PCG_MF:
        return solve_pn_pcg(state, config, cn, True, **kw)
    if kind is SolverKind.PN_MGPCG:
        return solve_pn_mgpcg(state, config, cn, **kw)
    raise ValueError(f"unknown solver {kind}")


def step_grid(state: ObjectiveState, config: SolverConfig, cn: NodeCN, **kw) -> tuple[np.ndarray, SolveResult]:
    """Solve for dv and return v^{n+1}; Dirichlet nodes get their scripted velocity exactly."""
    result = solve(state, config, cn, **kw)
    v = state.grid.velocity + result.dv
    m = state.dirichlet
    v[m] = state.grid.dirichlet_velocity[m]
    return v, result
