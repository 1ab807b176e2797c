"""Command line entry point: run, compare, report and dump built-in scenes."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from contextlib import nullcontext
from dataclasses import replace
from pathlib import Path

from ..grid_kernels import KernelKind
from ..solvers import SolverKind
from .driver import SimulationError, SimulationState, advance_step, run_frames
from .io import OutputError, write_diagnostics, write_outputs
from .scene import SceneConfig, SceneError, load_scene, scene_from_dict
from .scenes import LIBRARY, builtin

log = logging.getLogger("hotmpm")


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {text}")
    return v


def _positive_float(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _solver_list(text):
    names = [s.strip() for s in text.split(",") if s.strip()]
    bad = [s for s in names if s not in SolverKind.names()]
    if bad or not names:
        raise argparse.ArgumentTypeError(
            f"unknown solver {', '.join(bad) or text!r} (choose from {', '.join(SolverKind.names())})")
    return names


def _add_common(p):
    p.add_argument("scene", help="scene JSON file or built-in scene name")
    p.add_argument("--out", default="out", help="output directory (default: out)")
    p.add_argument("--eps", type=_positive_float, help="outer tolerance (default from scene, 1e-7)")
    p.add_argument("--levels", type=_positive_int, help="multigrid levels")
    p.add_argument("--window", type=_positive_int, help="L-BFGS window")
    p.add_argument("--embedding", choices=["linear", "quadratic"], help="multigrid embedding kernel")
    p.add_argument("--threads", type=_positive_int, help="BLAS/OpenMP thread count")
    p.add_argument("--seed", type=_nonneg_int, help="particle sampling seed")
    p.add_argument("--deterministic", action="store_true",
                   help="bit-reproducible output (zero wall times, one thread unless --threads)")
    p.add_argument("--report", action="store_true", help="render convergence figures into --out")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hotmpm", description="Implicit MPM with multigrid-initialized L-BFGS.")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate a scene and write snapshots and diagnostics")
    _add_common(run)
    run.add_argument("--solver", choices=SolverKind.names(), help="nonlinear solver (default from scene)")
    run.add_argument("--frames", type=_nonneg_int, help="number of frames (default from scene)")
    run.add_argument("--no-text", action="store_true", help="skip the plain-text position tables")

    cmp_ = sub.add_parser("compare", help="run several solvers on the same scene and tabulate")
    _add_common(cmp_)
    cmp_.add_argument("--solvers", type=_solver_list, default=SolverKind.names(),
                      help=f"comma-separated subset of {','.join(SolverKind.names())}")
    cmp_.add_argument("--steps", type=_positive_int, default=1, help="time steps per solver (default 1)")

    rep = sub.add_parser("report", help="render figures for diagnostics tables under a directory")
    rep.add_argument("out", help="directory containing diagnostics.csv files")

    sc = sub.add_parser("scene", help="print a built-in scene as JSON")
    sc.add_argument("name", nargs="?", choices=list(LIBRARY), help="built-in scene")
    sc.add_argument("--list", action="store_true", help="list built-in scenes")
    return ap


def resolve_scene(ref: str) -> SceneConfig:
    path = Path(ref)
    if path.exists():
        return load_scene(path)
    if ref in LIBRARY:
        return scene_from_dict(builtin(ref))
    raise SceneError(f"no scene file or built-in scene named {ref!r} "
                     f"(built-ins: {', '.join(LIBRARY)})")


def configure(scene: SceneConfig, args) -> SceneConfig:
    solver = scene.solver
    upd = {}
    if getattr(args, "solver", None):
        upd["solver"] = SolverKind(args.solver)
    if args.eps is not None:
        upd["eps"] = args.eps
    if args.levels is not None:
        upd["levels"] = args.levels
    if args.window is not None:
        upd["window"] = args.window
    if args.embedding is not None:
        upd["embedding"] = KernelKind.parse(args.embedding)
    if upd:
        solver = replace(solver, **upd)
    scene = replace(scene, solver=solver)
    if args.seed is not None:
        scene = replace(scene, seed=args.seed)
    return scene


def _thread_limit(args):
    n = args.threads or (1 if args.deterministic else None)
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def cmd_run(args) -> int:
    scene = configure(resolve_scene(args.scene), args)
    frames = scene.frames if args.frames is None else args.frames
    out = Path(args.out)
    sim = SimulationState.from_scene(scene)
    print(f"{scene.name}: {sim.particles.count} particles, dim {scene.dim}, dx {scene.dx:g}, "
          f"solver {scene.solver.solver.value}, {frames} frames")

    def on_frame(s, summary):
        write_outputs(out, s.frame, s.particles, s.diagnostics, text_table=not args.no_text)
        print(summary.line(), flush=True)

    write_outputs(out, 0, sim.particles, sim.diagnostics, text_table=not args.no_text)
    run_frames(sim, scene, frames, deterministic=args.deterministic, on_frame=on_frame)
    if sim.inverted:
        print(f"warning: {sim.inverted} inverted particle updates", file=sys.stderr)
    if args.report:
        from .report import report_directory
        for p in report_directory(out, scene.name, None):
            print(f"wrote {p}")
    return 0


def cmd_compare(args) -> int:
    base = configure(resolve_scene(args.scene), args)
    out = Path(args.out)
    rows = []
    counts = {}
    for name in args.solvers:
        scene = replace(base, solver=replace(base.solver, solver=SolverKind(name)))
        sim = SimulationState.from_scene(scene)
        t0 = time.perf_counter()
        its = []
        for _ in range(args.steps):
            sim, r = advance_step(sim, scene, deterministic=args.deterministic)
            its.append(r.iterations)
        wall = 0.0 if args.deterministic else time.perf_counter() - t0
        sub = out / name
        sub.mkdir(parents=True, exist_ok=True)
        write_diagnostics(sub / "diagnostics.csv", sim.diagnostics)
        solves = sim.solves
        row = {"solver": name, "steps": len(solves), "outer": sum(its),
               "cg": sum(r.cg_iterations for r in solves), "vcycles": sum(r.vcycles for r in solves),
               "rebuilds": sum(r.rebuilds for r in solves),
               "work_units": repr(sum(d.work_units for d in sim.diagnostics)), "wall_time": repr(wall)}
        rows.append(row)
        counts[name] = its
        print(f"{name:10s} outer {row['outer']:5d}  cg {row['cg']:6d}  vcycles {row['vcycles']:5d}  "
              f"per-step {its}", flush=True)
    out.mkdir(parents=True, exist_ok=True)
    try:
        with open(out / "summary.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    except OSError as e:
        raise OutputError(f"cannot write {out / 'summary.csv'}: {e.strerror or e}") from e
    if args.report:
        from .io import read_diagnostics
        from .report import iterations_figure, report_directory, solver_convergence_figure
        made = report_directory(out, None, None)
        made.append(iterations_figure(counts, base.name, out / "iterations.png"))
        tables = {name: read_diagnostics(out / name / "diagnostics.csv") for name in counts}
        made.append(solver_convergence_figure(tables, base.name, out / "convergence.png"))
        for p in made:
            print(f"wrote {p}")
    return 0


def cmd_report(args) -> int:
    from .report import report_directory
    made = report_directory(args.out)
    if not made:
        print(f"no diagnostics found under {args.out}", file=sys.stderr)
        return 1
    for p in made:
        print(f"wrote {p}")
    return 0


def cmd_scene(args) -> int:
    if args.list or not args.name:
        for name, fn in LIBRARY.items():
            print(f"{name:18s} {(fn.__doc__ or '').strip()}")
        return 0
    print(json.dumps(builtin(args.name), indent=2))
    return 0


COMMANDS = {"run": cmd_run, "compare": cmd_compare, "report": cmd_report, "scene": cmd_scene}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        ctx = _thread_limit(args) if hasattr(args, "threads") else nullcontext()
        with ctx:
            return COMMANDS[args.command](args)
    except (SceneError, SimulationError, OutputError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
