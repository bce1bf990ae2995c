"""Run directories: manifest, norm series and binary snapshots."""
from __future__ import annotations

import csv
import json
import os
import platform
import struct
from pathlib import Path

import numpy as np

from . import __version__, kernels

MANIFEST = "manifest.json"
NORMS = "norms.csv"
FAILED = "FAILED"

# magic "DNLS", n, M, t, then padding to 32 bytes; data follows as <c8
_HEADER = struct.Struct("<4sIId12x")
_MAGIC = b"DNLS"


def environment_info() -> dict:
    return {
        "dnls": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "kernel_backend": kernels.BACKEND,
        "threads": os.cpu_count(),
    }


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def snapshot_name(index: int) -> str:
    return f"alpha_{index:04d}.bin"


def write_snapshot(path, t: float, alpha):
    """One ``(n, M)`` snapshot as little-endian complex64 behind a 32-byte header."""
    alpha = np.atleast_2d(np.asarray(alpha))
    n, M = alpha.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, n, M, float(t)))
        fh.write(np.ascontiguousarray(alpha, dtype="<c8").tobytes())


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`; returns ``(t, alpha)`` with ``alpha`` complex128."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, n, M, t = _HEADER.unpack(head)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        data = fh.read()
    if len(data) != 8 * n * M:
        raise ValueError(f"{path}: expected {8 * n * M} data bytes, found {len(data)}")
    return t, np.frombuffer(data, dtype="<c8").reshape(n, M).astype(np.complex128)


def write_snapshots(run_dir, times, alpha):
    for old in Path(run_dir).glob("alpha_[0-9][0-9][0-9][0-9].bin"):
        old.unlink()
    for i, (t, a) in enumerate(zip(times, alpha)):
        write_snapshot(Path(run_dir) / snapshot_name(i), t, a)


def read_snapshots(run_dir):
    """All ``alpha_XXXX.bin`` files of a run, in index order: ``(times, alpha)``."""
    files = sorted(Path(run_dir).glob("alpha_[0-9][0-9][0-9][0-9].bin"))
    if not files:
        raise FileNotFoundError(f"{run_dir}: no snapshot files")
    pairs = [read_snapshot(f) for f in files]
    return np.array([p[0] for p in pairs]), np.stack([p[1] for p in pairs])


def write_norms(path, traj):
    """``t, l2_j, linf_j, mass_total, mass_diff`` per snapshot, repr floats."""
    n = traj.n
    header = ["t"] + [f"l2_{j + 1}" for j in range(n)] + [f"linf_{j + 1}" for j in range(n)]
    header += ["mass_total", "mass_diff"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, t in enumerate(traj.times):
            row = [t, *traj.l2[i], *traj.linf[i], traj.mass_total[i], traj.mass_diff[i]]
            w.writerow([repr(float(v)) for v in row])


def read_csv(path) -> dict:
    """Columns of a numeric CSV as float arrays keyed by header name."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    data = np.array([[float(v) for v in r] for r in body]) if body else np.zeros((0, len(header)))
    return {h: data[:, i] for i, h in enumerate(header)}


def write_columns(path, columns: dict):
    names = list(columns)
    cols = [np.asarray(columns[k], dtype=float) for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*cols):
            w.writerow([repr(float(v)) for v in row])


def mark_failed(run_dir, reason: str):
    Path(run_dir, FAILED).write_text(reason.rstrip() + "\n")
