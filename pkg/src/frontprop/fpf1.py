"""FPF1 field dumps: a text header plus a sibling little-endian float64 file.

Header layout (one ``key: value`` per line after the magic line)::

    FPF1
    dim: 2
    extents: 200 200
    origin: -2.0 -2.0
    spacing: 0.02
    time: 0.5
    value_count: 40000
    sentinel: 1e+300        # optional, stands for +inf

The binary file is ``<header>.bin`` holding values in row-major order.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .grid import Grid, ScalarField

MAGIC = "FPF1"
INF_SENTINEL = 1e300


def _bin_path(path: Path) -> Path:
    return path.with_name(path.name + ".bin")


def write_fpf1(path, grid: Grid, values, time: float = 0.0, sentinel: float | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    values = np.asarray(values, dtype=float)
    if values.shape != grid.shape:
        raise ValueError("values do not match grid")
    if sentinel is None and np.isinf(values).any():
        sentinel = INF_SENTINEL
    data = values if sentinel is None else np.where(np.isposinf(values), sentinel, values)
    lines = [
        MAGIC,
        f"dim: {grid.dim}",
        "extents: " + " ".join(str(n) for n in grid.shape),
        "origin: " + " ".join(repr(o) for o in grid.origin),
        f"spacing: {grid.h!r}",
        f"time: {float(time)!r}",
        f"value_count: {values.size}",
    ]
    if sentinel is not None:
        lines.append(f"sentinel: {sentinel!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    _bin_path(path).write_bytes(np.ascontiguousarray(data, dtype="<f8").tobytes())
    return path


def read_header(path) -> dict:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ValueError(f"{path} is not an FPF1 header")
    out = {}
    for line in lines[1:]:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, val = line.partition(":")
        out[key.strip()] = val.strip()
    hdr = {
        "dim": int(out["dim"]),
        "extents": tuple(int(v) for v in out["extents"].split()),
        "origin": tuple(float(v) for v in out["origin"].split()),
        "spacing": float(out["spacing"]),
        "time": float(out.get("time", 0.0)),
        "value_count": int(out["value_count"]),
    }
    if "sentinel" in out:
        hdr["sentinel"] = float(out["sentinel"])
    if len(hdr["extents"]) != hdr["dim"] or len(hdr["origin"]) != hdr["dim"]:
        raise ValueError("header dim disagrees with extents/origin")
    if int(np.prod(hdr["extents"])) != hdr["value_count"]:
        raise ValueError("value_count disagrees with extents")
    return hdr


def read_fpf1(path):
    """Return ``(grid, values, time)``; sentinel cells come back as +inf."""
    path = Path(path)
    hdr = read_header(path)
    raw = np.frombuffer(_bin_path(path).read_bytes(), dtype="<f8")
    if raw.size != hdr["value_count"]:
        raise ValueError("binary payload size disagrees with header")
    values = raw.reshape(hdr["extents"]).astype(float)
    if "sentinel" in hdr:
        values[values >= hdr["sentinel"]] = np.inf
    grid = Grid(hdr["origin"], hdr["spacing"], hdr["extents"])
    return grid, values, hdr["time"]


def load_field(path) -> ScalarField:
    grid, values, time = read_fpf1(path)
    return ScalarField(grid, values, time)


def write_trajectory(directory, traj) -> Path:
    """Dump each slice as ``slice_XXXX.fpf1`` plus ``index.csv`` (k, time, file)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rows = []
    for k, (t, f) in enumerate(zip(traj.times, traj.fields)):
        name = f"slice_{k:04d}.fpf1"
        write_fpf1(directory / name, f.grid, f.values, t)
        rows.append((k, repr(float(t)), name))
    with open(directory / "index.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "time", "file"])
        w.writerows(rows)
    return directory


def read_trajectory(directory):
    from .eikonal import Trajectory

    directory = Path(directory)
    with open(directory / "index.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    fields = [load_field(directory / r["file"]) for r in rows]
    return Trajectory([float(r["time"]) for r in rows], fields)


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    return path


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_front_csv(path, front) -> Path:
    rows = []
    for pid, line in enumerate(front.polylines):
        for pt in line:
            rows.append((float(pt[0]), float(pt[1]) if len(pt) > 1 else 0.0, pid))
    return write_csv(path, ["x", "y", "polyline_id"], rows)


def write_extremal_csv(path, ext) -> Path:
    rows = [(t, x[0], x[1], p[0], p[1]) for t, x, p in zip(ext.times, ext.x, ext.p)]
    return write_csv(path, ["t", "x", "y", "p_x", "p_y"], rows)
