"""Generate the packaged inversion example from a grid twice as fine in x and t.

Run from the repository root: ``python tools/make_example_data.py``.
"""

from pathlib import Path

import numpy as np

from fdwave.forward import FluxTrace, ProblemSpec, SourceSpec, measure_flux, solve_general
from fdwave.fracops import TimeGrid, TimeSeries
from fdwave.io import fluxtrace_csv
from fdwave.spatial import Coefficients, MeshField, SpatialMesh

OUT = Path(__file__).resolve().parents[1] / "src" / "fdwave" / "data"

ALPHA, N, NT = 1.5, 63, 128


def fine_flux() -> FluxTrace:
    mesh = SpatialMesh(0.0, 1.0, 2 * N + 1)
    grid = TimeGrid(1.0, 2 * NT)
    f = MeshField.from_function(mesh, lambda x: np.sqrt(2.0) * np.sin(np.pi * x))
    g = TimeSeries.from_function(grid, lambda t: 1.0 + t)
    spec = ProblemSpec(ALPHA, mesh, Coefficients.constant(1.0, 0.3, 0.1), grid,
                       source=SourceSpec(f, g, 1.0, lambda t: np.ones_like(t)))
    tr = measure_flux(solve_general(spec), spec.coeff, ("right",))
    coarse = TimeGrid(1.0, NT)
    return FluxTrace(coarse, tr.sides, tr.values[:, ::2].copy())


if __name__ == "__main__":
    (OUT / "example_flux.csv").write_text(fluxtrace_csv(fine_flux()))
    print("wrote", OUT / "example_flux.csv")
