"""CSV formats and atomic output handling.

Floats are written with 17 significant digits so that files round-trip
exactly. Outputs are staged in memory and committed together; each file is
written to a temporary name and renamed, and the manifest goes last.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .forward import FluxTrace, SpaceTimeField
from .fracops import TimeGrid, TimeSeries
from .spatial import MeshField, SpatialMesh

logger = logging.getLogger(__name__)

__all__ = [
    "fmt",
    "atomic_write",
    "rows_to_csv",
    "meshfield_csv",
    "timeseries_csv",
    "spacetime_csv",
    "fluxtrace_csv",
    "read_meshfield",
    "read_fluxtrace",
    "OutputSet",
]


def fmt(v: float) -> str:
    return "%.17g" % v


def atomic_write(path: Path, data: bytes) -> None:
    """Write through a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def rows_to_csv(header: Iterable[str], rows: Iterable[Iterable]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(list(header))
    for row in rows:
        w.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def meshfield_csv(f: MeshField) -> str:
    return rows_to_csv(("x", "value"), zip(map(float, f.mesh.nodes), map(float, f.values)))


def timeseries_csv(s: TimeSeries) -> str:
    return rows_to_csv(("t", "value"), zip(map(float, s.grid.nodes), map(float, s.values)))


def spacetime_csv(u: SpaceTimeField) -> str:
    """Long format ``t,x,value``, boundary nodes included, time-major."""
    x = u.mesh.all_nodes
    rows = ((float(t), float(xi), float(u.values[i, m]))
            for m, t in enumerate(u.grid.nodes) for i, xi in enumerate(x))
    return rows_to_csv(("t", "x", "value"), rows)


def fluxtrace_csv(tr: FluxTrace) -> str:
    rows = ((float(t), side, float(tr.values[k, m]))
            for k, side in enumerate(tr.sides) for m, t in enumerate(tr.grid.nodes))
    return rows_to_csv(("t", "side", "flux"), rows)


def _read_rows(path: Path, header: tuple[str, ...]) -> list[list[str]]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"data file {path} does not exist")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(c.strip() for c in rows[0]) != header:
        raise ValueError(f"{path}: expected header {','.join(header)}")
    return [r for r in rows[1:] if r]


def read_meshfield(path: Path, mesh: SpatialMesh, atol: float = 1e-9) -> MeshField:
    rows = _read_rows(path, ("x", "value"))
    x = np.array([float(r[0]) for r in rows])
    if x.shape != mesh.nodes.shape or np.max(np.abs(x - mesh.nodes)) > atol:
        raise ValueError(f"{path}: nodes do not match the mesh ({mesh.n_interior} interior nodes)")
    return MeshField(mesh, np.array([float(r[1]) for r in rows]))


def read_fluxtrace(path: Path, grid: TimeGrid, sides: tuple[str, ...], atol: float = 1e-9) -> FluxTrace:
    """Read a ``t,side,flux`` file and check it against the template grid and sides."""
    rows = _read_rows(path, ("t", "side", "flux"))
    vals = np.full((len(sides), grid.size), np.nan)
    by_side: dict[str, list[tuple[float, float]]] = {}
    for r in rows:
        if len(r) != 3:
            raise ValueError(f"{path}: malformed row {r!r}")
        by_side.setdefault(r[1].strip(), []).append((float(r[0]), float(r[2])))
    if set(by_side) != set(sides):
        raise ValueError(f"{path}: data sides {sorted(by_side)} do not match the template sides {list(sides)}")
    for k, side in enumerate(sides):
        t, v = map(np.array, zip(*by_side[side]))
        if t.size != grid.size or np.max(np.abs(t - grid.nodes)) > atol:
            raise ValueError(f"{path}: time nodes on side {side!r} do not match the template grid "
                             f"({grid.size} nodes on [0, {grid.T}])")
        vals[k] = v
    return FluxTrace(grid, tuple(sides), vals)


@dataclass
class OutputSet:
    """Files staged for one run; nothing touches the disk before :meth:`commit`."""

    out_dir: Path
    files: dict[str, bytes] = field(default_factory=dict)
    timings: dict[str, float] = field(default_factory=dict)

    def add(self, name: str, text: str) -> None:
        self.files[name] = text.encode("utf-8")

    def commit(self, manifest: dict | None) -> Path | None:
        """Write every staged file, then ``manifest.json`` with their checksums.

        ``manifest=None`` writes the files only, for runs that did not succeed.
        """
        out = Path(self.out_dir)
        inventory = {}
        for name in sorted(self.files):
            data = self.files[name]
            atomic_write(out / name, data)
            inventory[name] = {"sha256": hashlib.sha256(data).hexdigest(), "bytes": len(data)}
        if manifest is None:
            return None
        manifest = dict(manifest, outputs=inventory, timings=self.timings)
        path = out / "manifest.json"
        atomic_write(path, (json.dumps(manifest, indent=2, sort_keys=True, default=str) + "\n").encode())
        logger.info("wrote %d files and manifest to %s", len(self.files), out)
        return path
