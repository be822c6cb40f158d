"""Forward and inverse source problems for the 1-D time-fractional diffusion-wave equation.

The equation ``d_t^alpha u + A u = f(x) g(t)`` with ``1 < alpha < 2`` and a
second-order elliptic ``A`` is solved on an interval with Dirichlet ends.
The unknown spatial factor ``f`` is recovered from the conormal flux on part
of the boundary.
"""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"

from .adjoint import Probe, b_norm, bilinear_form, integral_identity_residual, probe_dictionary, solve_adjoint
from .forward import (
    FluxTrace,
    NumericalInstabilityError,
    ProblemSpec,
    SourceSpec,
    SpaceTimeField,
    duhamel_solve,
    growth_sanity,
    measure_flux,
    picard_iterate,
    solve_general,
    solve_symmetric,
)
from .fracops import TimeGrid, TimeSeries, caputo_shifted, duhamel_kernel, rl_integral, rl_integral_backward
from .inverse import (
    ForwardMap,
    assemble_forward_map,
    deconvolve_flux,
    discrepancy_sweep,
    reconstruct,
    stability_experiment,
)
from .mlf import MittagLefflerError, mittag_leffler
from .spatial import Coefficients, EigenBasis, MeshField, SpatialMesh, eigendecompose
from .ucp import LaplaceGrid, laplace_transform, resolvent_solve, ucp_correspondence_report


def example_path(name: str) -> Path:
    """Path of a file shipped in the package ``data`` directory."""
    return Path(str(resources.files(__package__) / "data" / name))


__all__ = [
    "__version__",
    "example_path",
    "Coefficients",
    "EigenBasis",
    "FluxTrace",
    "ForwardMap",
    "LaplaceGrid",
    "MeshField",
    "MittagLefflerError",
    "NumericalInstabilityError",
    "Probe",
    "ProblemSpec",
    "SourceSpec",
    "SpaceTimeField",
    "SpatialMesh",
    "TimeGrid",
    "TimeSeries",
    "assemble_forward_map",
    "b_norm",
    "bilinear_form",
    "caputo_shifted",
    "deconvolve_flux",
    "discrepancy_sweep",
    "duhamel_kernel",
    "duhamel_solve",
    "eigendecompose",
    "growth_sanity",
    "integral_identity_residual",
    "laplace_transform",
    "measure_flux",
    "mittag_leffler",
    "picard_iterate",
    "probe_dictionary",
    "reconstruct",
    "resolvent_solve",
    "rl_integral",
    "rl_integral_backward",
    "solve_adjoint",
    "solve_general",
    "solve_symmetric",
    "stability_experiment",
    "ucp_correspondence_report",
]
