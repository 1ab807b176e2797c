"""Particle snapshots and diagnostics tables."""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from ..solvers import DiagnosticsRecord

MAGIC = b"HOTP"
VERSION = 1
HEADER = struct.Struct("<4sIIQ")


class OutputError(OSError):
    pass


def encode_snapshot(x: np.ndarray, v: np.ndarray) -> bytes:
    x = np.asarray(x, dtype="<f8")
    v = np.asarray(v, dtype="<f8")
    n, dim = x.shape if x.ndim == 2 else (0, 0)
    if v.shape != x.shape:
        raise ValueError("position and velocity arrays differ in shape")
    body = np.concatenate([x, v], axis=1) if n else np.zeros((0, 2 * dim), dtype="<f8")
    return HEADER.pack(MAGIC, VERSION, dim, n) + np.ascontiguousarray(body, dtype="<f8").tobytes()


def decode_snapshot(data: bytes) -> tuple[np.ndarray, np.ndarray]:
    if len(data) < HEADER.size:
        raise ValueError("snapshot shorter than its header")
    magic, version, dim, n = HEADER.unpack_from(data)
    if magic != MAGIC:
        raise ValueError(f"bad snapshot magic {magic!r}")
    if version != VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    expected = HEADER.size + 16 * dim * n
    if len(data) != expected:
        raise ValueError(f"snapshot size {len(data)} != {expected} for {n} particles in {dim}D")
    body = np.frombuffer(data, dtype="<f8", offset=HEADER.size).reshape(n, 2 * dim)
    return body[:, :dim].astype(float), body[:, dim:].astype(float)


def _write(path: Path, payload, mode: str):
    try:
        with open(path, mode) as fh:
            fh.write(payload)
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror or e}") from e


def write_snapshot(path, x, v):
    _write(Path(path), encode_snapshot(x, v), "wb")


def read_snapshot(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise OutputError(f"cannot read {path}: {e.strerror or e}") from e
    return decode_snapshot(data)


def write_positions_text(path, x):
    x = np.asarray(x, dtype=float)
    axes = "xyz"[: x.shape[1]] if x.ndim == 2 and x.shape[1] else "xy"
    lines = [",".join(axes)] + [",".join(repr(float(c)) for c in row) for row in x]
    _write(Path(path), "\n".join(lines) + "\n", "w")


def write_diagnostics(path, records: list[DiagnosticsRecord]):
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DiagnosticsRecord.columns())
            for r in records:
                w.writerow([repr(c) if isinstance(c, float) else c for c in r.row()])
    except OSError as e:
        raise OutputError(f"cannot write {path}: {e.strerror or e}") from e


def read_diagnostics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_outputs(out_dir, frame: int, particles, records: list[DiagnosticsRecord],
                  text_table: bool = True) -> dict[str, Path]:
    """Snapshot for `frame` plus the cumulative diagnostics table."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OutputError(f"cannot create {out}: {e.strerror or e}") from e
    paths = {"snapshot": out / f"frame_{frame:04d}.hotp", "diagnostics": out / "diagnostics.csv"}
    write_snapshot(paths["snapshot"], particles.x, particles.v)
    if text_table:
        paths["table"] = out / f"frame_{frame:04d}.csv"
        write_positions_text(paths["table"], particles.x)
    write_diagnostics(paths["diagnostics"], records)
    return paths
