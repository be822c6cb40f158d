import json

import numpy as np
import pytest

from fdwave.forward import FluxTrace, SpaceTimeField
from fdwave.fracops import TimeGrid, TimeSeries
from fdwave.io import (
    OutputSet,
    atomic_write,
    fluxtrace_csv,
    meshfield_csv,
    read_fluxtrace,
    read_meshfield,
    rows_to_csv,
    spacetime_csv,
    timeseries_csv,
)
from fdwave.spatial import MeshField, SpatialMesh

MESH, GRID = SpatialMesh(0.0, 1.0, 7), TimeGrid(1.0, 4)


def test_meshfield_round_trip_is_exact(tmp_path):
    f = MeshField(MESH, np.random.default_rng(0).standard_normal(7) / 3)
    p = tmp_path / "f.csv"
    p.write_text(meshfield_csv(f))
    assert np.array_equal(read_meshfield(p, MESH).values, f.values)
    with pytest.raises(ValueError, match="do not match"):
        read_meshfield(p, SpatialMesh(0.0, 1.0, 6))


def test_fluxtrace_round_trip_and_checks(tmp_path):
    tr = FluxTrace(GRID, ("left", "right"), np.random.default_rng(1).standard_normal((2, 5)))
    p = tmp_path / "flux.csv"
    p.write_text(fluxtrace_csv(tr))
    back = read_fluxtrace(p, GRID, ("left", "right"))
    assert np.array_equal(back.values, tr.values)
    with pytest.raises(ValueError, match="sides"):
        read_fluxtrace(p, GRID, ("right",))
    with pytest.raises(ValueError, match="time nodes"):
        read_fluxtrace(p, TimeGrid(1.0, 8), ("left", "right"))
    with pytest.raises(FileNotFoundError):
        read_fluxtrace(tmp_path / "none.csv", GRID, ("right",))
    bad = tmp_path / "bad.csv"
    bad.write_text("t,value\n0,1\n")
    with pytest.raises(ValueError, match="header"):
        read_fluxtrace(bad, GRID, ("right",))


def test_spacetime_layout():
    vals = np.arange(9 * 5, dtype=float).reshape(9, 5)
    text = spacetime_csv(SpaceTimeField(MESH, GRID, vals)).splitlines()
    assert text[0] == "t,x,value"
    assert len(text) == 1 + 9 * 5
    # time-major: the first block runs over x at t = 0
    assert text[1] == "0,0,0" and text[2] == "0,0.125,5"


def test_timeseries_and_rows():
    assert timeseries_csv(TimeSeries(GRID, np.zeros(5))).splitlines()[1] == "0,0"
    assert rows_to_csv(("a", "b"), [(0.1, "x")]) == "a,b\n0.10000000000000001,x\n"


def test_atomic_write_creates_parents(tmp_path):
    p = tmp_path / "deep" / "dir" / "file.txt"
    atomic_write(p, b"hello")
    assert p.read_bytes() == b"hello"
    assert [q.name for q in p.parent.iterdir()] == ["file.txt"]


def test_output_set_manifest(tmp_path):
    out = OutputSet(tmp_path / "run")
    out.add("a.csv", "x\n1\n")
    out.timings["solve"] = 0.5
    assert not (tmp_path / "run").exists()
    path = out.commit({"command": "forward"})
    manifest = json.loads(path.read_text())
    assert manifest["command"] == "forward"
    assert manifest["outputs"]["a.csv"]["bytes"] == 4
    assert manifest["timings"] == {"solve": 0.5}


def test_output_set_without_manifest(tmp_path):
    out = OutputSet(tmp_path)
    out.add("report.csv", "s\n")
    assert out.commit(None) is None
    assert (tmp_path / "report.csv").exists() and not (tmp_path / "manifest.json").exists()
