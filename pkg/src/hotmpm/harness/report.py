"""Convergence figures rendered next to the diagnostics tables."""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .io import read_diagnostics  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "legend.fontsize": 8,
    "savefig.bbox": "tight",
}


def _by_step(rows):
    steps = defaultdict(list)
    for r in rows:
        steps[(int(r["frame"]), int(r["step"]))].append(r)
    return steps


def convergence_figure(rows, title: str, path, tolerance: float | None = None) -> Path:
    """Scaled residual against outer iteration, one curve per time step."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        steps = _by_step(rows)
        cmap = plt.get_cmap("viridis")
        for i, (key, rs) in enumerate(sorted(steps.items())):
            it = [int(r["iteration"]) for r in rs]
            res = [float(r["scaled_residual"]) for r in rs]
            ax.semilogy(it, res, color=cmap(i / max(len(steps) - 1, 1)), lw=0.9,
                        label=f"step {key[1]}" if len(steps) <= 8 else None)
        if tolerance is not None:
            ax.axhline(tolerance, color="k", ls="--", lw=0.8, label="tolerance")
        ax.set_xlabel("outer iteration")
        ax.set_ylabel("scaled residual")
        ax.set_title(title)
        if ax.get_legend_handles_labels()[0]:
            ax.legend(loc="upper right")
        fig.savefig(path)
        plt.close(fig)
    return path


def iterations_figure(counts: dict[str, list[int]], title: str, path) -> Path:
    """Outer iterations per step for several solvers."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, its in counts.items():
            ax.plot(range(len(its)), its, marker="o", ms=3, lw=1.0, label=name)
        ax.set_xlabel("time step")
        ax.set_ylabel("outer iterations")
        ax.set_title(title)
        ax.legend()
        fig.savefig(path)
        plt.close(fig)
    return path


def report_directory(out_dir, title: str | None = None, tolerance: float | None = None) -> list[Path]:
    """Render figures for every diagnostics table found under `out_dir`."""
    out = Path(out_dir)
    made = []
    for csv_path in sorted(out.rglob("diagnostics.csv")):
        rows = read_diagnostics(csv_path)
        if not rows:
            continue
        name = title or csv_path.parent.name
        made.append(convergence_figure(rows, name, csv_path.with_name("convergence.png"), tolerance))
        per_step = {k: len(v) for k, v in _by_step(rows).items()}
        made.append(iterations_figure({name: [per_step[k] for k in sorted(per_step)]}, name,
                                      csv_path.with_name("iterations.png")))
    return made


def solver_convergence_figure(tables: dict[str, list[dict]], title: str, path, step: int = 0) -> Path:
    """Scaled residual against outer iteration for one time step, one curve per solver."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for name, rows in tables.items():
            rs = [r for r in rows if int(r["step"]) == step]
            if rs:
                ax.semilogy([int(r["iteration"]) for r in rs], [float(r["scaled_residual"]) for r in rs],
                            lw=1.0, label=f"{name} ({len(rs)})")
        ax.set_xlabel("outer iteration")
        ax.set_ylabel("scaled residual")
        ax.set_title(f"{title}, step {step}")
        ax.legend()
        fig.savefig(path)
        plt.close(fig)
    return path
