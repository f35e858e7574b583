"""Byte-stable CSV output, run manifests and atomic file writes."""

from __future__ import annotations

import datetime as _dt
import json
import math
import os
import platform
import tempfile
import uuid
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .grid import CellField, Grid1D
from .scheme import SchemeConfig, Trajectory


def fmt(v) -> str:
    """Locale-independent cell formatting: 6 significant digits for reals."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.5e}"
    s = str(v)
    if any(c in s for c in ',"\n'):
        s = '"' + s.replace('"', '""') + '"'
    return s


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def write_atomic(path: Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        kw = {} if isinstance(data, bytes) else {"encoding": "utf-8", "newline": "\n"}
        with os.fdopen(fd, mode, **kw) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    write_atomic(path, csv_text(header, rows))
    return Path(path)


def trajectory_rows(traj: Trajectory):
    x = traj.grid.midpoints
    for t, row in zip(traj.times, traj.values):
        for xj, uj in zip(x, row):
            yield (float(t), float(xj), float(uj))


def write_trajectory(path: Path, traj: Trajectory) -> Path:
    return write_csv(path, ["t", "x", "u"], trajectory_rows(traj))


def read_trajectory(path: Path, config: SchemeConfig) -> Trajectory:
    """Rebuild a trajectory from a ``t,x,u`` CSV (values carry 6 significant digits)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    times = np.unique(data[:, 0])
    x = np.unique(data[:, 1])
    n = len(x)
    values = data[:, 2].reshape(len(times), n)
    dx = config.dx
    x_min = float(x[0] - dx / 2)
    grid = Grid1D(x_min, x_min + n * dx, dx, n)
    steps = np.rint(times / config.dt).astype(int)
    values.setflags(write=False)
    return Trajectory(config, grid, steps, steps * config.dt, values, float(values.min()), float(values.max()))


def write_field(path: Path, f: CellField, column: str = "u") -> Path:
    return write_csv(path, ["x", column], zip(f.x.tolist(), f.values.tolist()))


def now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def new_run_id() -> str:
    return uuid.uuid4().hex[:12]


def write_manifest(out: Path, command: str, config: dict, artifacts: Sequence[Path], started: str,
                   run_id: str, extra: dict | None = None) -> Path:
    out = Path(out)
    manifest = {
        "run_id": run_id,
        "command": command,
        "config": config,
        "started": started,
        "finished": now(),
        "artifacts": sorted(str(Path(a).relative_to(out)) for a in artifacts),
        "library_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    write_atomic(path, json.dumps(manifest, indent=2, sort_keys=True, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def find_manifest(run_id: str, search: Path) -> Path:
    for p in sorted(Path(search).rglob("manifest.json")):
        try:
            if json.loads(p.read_text(encoding="utf-8")).get("run_id") == run_id:
                return p
        except (OSError, ValueError):
            continue
    raise FileNotFoundError(f"no manifest with run_id {run_id!r} under {search}")
