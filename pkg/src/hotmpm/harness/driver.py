"""Per-step driver: P2G, scripted boundaries, grid solve, G2P, strain update, advection."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..grid_kernels import activate_grid, cfl_dt
from ..objective import ObjectiveState, apply_colliders, compute_node_cn
from ..solvers import DiagnosticsRecord, SolveResult, SolverConfig, SolverError, step_grid
from ..transfer import Particles, advect, g2p, p2g, particle_stencil, update_strain
from .scene import SceneConfig

log = logging.getLogger(__name__)


class SimulationError(RuntimeError):
    def __init__(self, msg, step):
        super().__init__(msg)
        self.step = step


@dataclass
class SimulationState:
    particles: Particles
    time: float = 0.0
    frame: int = 0
    step: int = 0
    diagnostics: list[DiagnosticsRecord] = field(default_factory=list)
    solves: list[SolveResult] = field(default_factory=list)
    inverted: int = 0

    @classmethod
    def from_scene(cls, scene: SceneConfig) -> "SimulationState":
        return cls(particles=scene.sample_particles())


@dataclass
class StepProblem:
    """Everything frozen at the start of a step, before the grid solve."""

    state: ObjectiveState
    cn: object
    stencil: object
    dt: float


def prepare_step(particles: Particles, scene: SceneConfig, t: float, dt: float) -> StepProblem:
    grid = activate_grid(particles.x, scene.dx)
    stencil = particle_stencil(grid, particles.x)
    p2g(particles, grid, stencil)
    apply_colliders(grid, scene.colliders, t)
    obj = ObjectiveState.build(grid, particles, stencil, scene.material_list, dt, scene.gravity)
    cn = compute_node_cn(obj, particles, scene.material_list)
    return StepProblem(obj, cn, stencil, dt)


def step_dt(sim: SimulationState, scene: SceneConfig) -> float:
    v = sim.particles.v
    v_max = float(np.sqrt((v * v).sum(axis=1)).max()) if len(v) else 0.0
    dt = cfl_dt(v_max, scene.dx, scene.fps)
    frame_end = (sim.frame + 1) / scene.fps
    remaining = frame_end - sim.time
    # never leave a sliver shorter than 1% of a step before the frame boundary
    if remaining <= dt * 1.01:
        dt = remaining
    return dt


def advance_step(sim: SimulationState, scene: SceneConfig, config: SolverConfig | None = None,
                 dt: float | None = None, deterministic: bool = False) -> tuple[SimulationState, SolveResult]:
    """One implicit MPM step; on solver failure `sim` is left untouched."""
    config = config or scene.solver
    dt = step_dt(sim, scene) if dt is None else dt
    particles = sim.particles.copy()
    prob = prepare_step(particles, scene, sim.time, dt)
    try:
        v_new, result = step_grid(prob.state, config, prob.cn, frame=sim.frame, step=sim.step,
                                  deterministic=deterministic)
    except SolverError as e:
        raise SimulationError(f"step {sim.step}: {e}", sim.step) from e
    g2p(v_new, particles, prob.stencil, scene.dx)
    inverted = update_strain(particles, v_new, prob.stencil, dt, scene.material_list)
    advect(particles, dt)
    sim.particles = particles
    sim.time += dt
    sim.step += 1
    sim.inverted += inverted
    sim.diagnostics.extend(result.records)
    sim.solves.append(result)
    if sim.time >= (sim.frame + 1) / scene.fps * (1 - 1e-12):
        sim.frame += 1
    return sim, result


def advance_frame(sim: SimulationState, scene: SceneConfig, config: SolverConfig | None = None,
                  deterministic: bool = False) -> SimulationState:
    target = sim.frame + 1
    while sim.frame < target:
        advance_step(sim, scene, config, deterministic=deterministic)
    return sim


@dataclass
class FrameSummary:
    frame: int
    time: float
    steps: int
    outer: int
    cg: int
    vcycles: int
    residual: float

    def line(self) -> str:
        return (f"frame {self.frame:4d}  t={self.time:.5f}  steps {self.steps:3d}  outer {self.outer:5d}  "
                f"cg {self.cg:6d}  vcycles {self.vcycles:5d}  residual {self.residual:.3e}")


def run_frames(sim: SimulationState, scene: SceneConfig, frames: int, config: SolverConfig | None = None,
               deterministic: bool = False, on_frame=None) -> list[FrameSummary]:
    """Advance `frames` frames, calling on_frame(sim, summary) after each."""
    out = []
    for _ in range(frames):
        first = len(sim.solves)
        advance_frame(sim, scene, config, deterministic)
        solves = sim.solves[first:]
        s = FrameSummary(sim.frame, sim.time, len(solves), sum(r.iterations for r in solves),
                         sum(r.cg_iterations for r in solves), sum(r.vcycles for r in solves),
                         max((r.residual for r in solves), default=0.0))
        out.append(s)
        if on_frame is not None:
            on_frame(sim, s)
    return out
