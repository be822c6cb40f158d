"""Backward adjoint problem, the bilinear form B_g and the flux-data norm.

The adjoint field ``v`` lives backward in time. Writing ``w(s) = v(T - s)`` turns
it into a forward problem

    d_s^alpha w + A0 w - (B w)' + c w = 0,   w(0) = w_s(0) = 0,

with Dirichlet data ``psi(T - s)`` on the probed side and zero elsewhere. The
terminal conditions of the backward problem become the homogeneous initial
data of ``w``. The boundary data are lifted by ``l(x, s) = chi(x) psi(T - s)``
with ``chi`` linear in ``x``; the remainder has zero boundary values and is
computed by the forward sweep.

Integrating the primal equation against ``v`` by parts gives

    int_0^T int_Gamma (d_nu u) psi dt = - B_g(f, psi)

for the outward conormal; the sign is carried explicitly below.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .forward import FluxTrace, ProblemSpec, SpaceTimeField, march, measure_flux, solve_general
from .fracops import TimeGrid, TimeSeries, trapezoid_weights
from .spatial import Coefficients, MeshField

logger = logging.getLogger(__name__)

__all__ = [
    "Probe",
    "BilinearReport",
    "probe_dictionary",
    "adjoint_coefficients",
    "solve_adjoint",
    "bilinear_form",
    "flux_pairing",
    "integral_identity_residual",
    "b_norm",
]

PROBE_TOL = 1e-8


@dataclass(frozen=True)
class Probe:
    """Boundary profile ``psi(t)`` on one side; must vanish with its slope at ``t = T``."""

    side: str
    profile: TimeSeries
    label: str = ""

    def __post_init__(self) -> None:
        if self.side not in ("left", "right"):
            raise ValueError(f"unknown probe side {self.side!r}")
        v = self.profile.values
        scale = max(1.0, float(np.max(np.abs(v))))
        if abs(v[-1]) > PROBE_TOL * scale or abs(v[0]) > PROBE_TOL * scale:
            raise ValueError("probe must vanish at t=0 and t=T")
        # one-sided slope at T relative to the neighbouring values: zero for a
        # quadratic onset, -2 s dt against 1.5 s dt for a linear one
        if v.size >= 3:
            slope = abs(3.0 * v[-1] - 4.0 * v[-2] + v[-3])
            if slope > 0.5 * (abs(v[-2]) + abs(v[-3])) + PROBE_TOL * scale:
                raise ValueError("probe derivative must vanish at t=T")

    def as_trace(self, sides: tuple[str, ...]) -> FluxTrace:
        """The probe as an element of the data space over ``sides``."""
        vals = np.zeros((len(sides), self.profile.grid.size))
        vals[sides.index(self.side)] = self.profile.values
        return FluxTrace(self.profile.grid, sides, vals)


@dataclass(frozen=True)
class BilinearReport:
    bilinear: float
    flux_side: float
    abs_residual: float
    rel_residual: float


def probe_dictionary(grid: TimeGrid, sides=("right",), K: int = 8) -> list[Probe]:
    """Bumps ``sin^2(k pi t / T)``, ``k = 1..K``, unit norm in the data inner product."""
    t = grid.nodes
    w = trapezoid_weights(grid.n_steps) * grid.dt
    out = []
    for side in sides:
        for k in range(1, K + 1):
            psi = np.sin(k * np.pi * t / grid.T) ** 2
            psi[0] = psi[-1] = 0.0
            psi /= np.sqrt(np.sum(w * psi**2))
            out.append(Probe(side, TimeSeries(grid, psi), label=f"{side}:k={k}"))
    return out


def adjoint_coefficients(coeff: Coefficients) -> Coefficients:
    """Coefficients of ``A0 w - B w' + (c - B') w``, the expanded divergence form."""
    if coeff.B_prime is not None:
        Bp = coeff.B_prime
    else:
        def Bp(x):
            x = np.asarray(x, dtype=float)
            eps = 1e-5 * max(1.0, float(np.max(np.abs(x))))
            return (np.asarray(coeff.B(x + eps)) - np.asarray(coeff.B(x - eps))) / (2 * eps)

    return Coefficients(
        a=coeff.a,
        B=lambda x: -np.asarray(coeff.B(x), dtype=float),
        c=lambda x: np.asarray(coeff.c(x), dtype=float) - np.asarray(Bp(x), dtype=float),
        a0=coeff.a0,
        B_prime=lambda x: -np.asarray(Bp(x), dtype=float),
    )


def _lift_profile(mesh, side: str) -> tuple[np.ndarray, float]:
    """Linear ``chi`` on all nodes (1 at ``side``, 0 at the other end) and its slope."""
    x = mesh.all_nodes
    length = mesh.x_R - mesh.x_L
    if side == "right":
        return (x - mesh.x_L) / length, 1.0 / length
    return (mesh.x_R - x) / length, -1.0 / length


def solve_adjoint(spec: ProblemSpec, probe: Probe | list[Probe]) -> SpaceTimeField:
    """Backward adjoint field ``v[psi]`` on the grids of ``spec``.

    Several probes are superposed (their boundary data add). Boundary rows of
    the returned field carry the Dirichlet data.
    """
    probes = [probe] if isinstance(probe, Probe) else list(probe)
    mesh, grid = spec.mesh, spec.grid
    for p in probes:
        if p.profile.grid != grid:
            raise ValueError("probe lives on a different time grid")
    adj = spec.with_(coeff=adjoint_coefficients(spec.coeff), a=None, b=None, source=None, F=None)
    a_half = adj.coeff.a_half(mesh)
    B = adj.coeff.B_nodes(mesh)
    c = adj.coeff.c_nodes(mesh)
    basis, weights = adj.basis, adj.weights
    h = mesh.h
    lift = np.zeros((mesh.n_interior + 2, grid.size))
    free = np.zeros((basis.size, grid.size))
    for p in probes:
        chi, slope = _lift_profile(mesh, p.side)
        psi_rev = p.profile.values[::-1]
        # A0 chi with the boundary values of chi included
        flux = a_half * np.diff(chi) / h
        astar_chi = -np.diff(flux) / h + B * slope + c * chi[1:-1]
        chi_n = basis.project(chi[1:-1])
        conv = weights.convolve(np.outer(np.ones(basis.size), psi_rev))
        # k_n * d^alpha psi = psi - lambda_n (k_n * psi) for psi with zero initial data,
        # so the Caputo derivative of the lift never has to be differenced
        free -= chi_n[:, None] * (psi_rev[None, :] - basis.lambdas[:, None] * conv)
        free -= basis.project(astar_chi)[:, None] * conv
        lift += np.outer(chi, psi_rev)
    if not np.any(lift):
        return SpaceTimeField(mesh, grid, np.zeros_like(lift))
    w0 = march(weights, adj.modal_first_order, free)
    w = lift
    w[1:-1] += basis.synthesize(w0)
    return SpaceTimeField(mesh, grid, w[:, ::-1].copy())


def bilinear_form(spec: ProblemSpec, f: MeshField, g: TimeSeries, probe: Probe | None = None,
                  v: SpaceTimeField | None = None) -> float:
    """``B_g(f, psi) = int_0^T <f g(t), v[psi](t)>_h dt`` by the trapezoid rule."""
    if v is None:
        if probe is None:
            raise ValueError("need a probe or a precomputed adjoint field")
        v = solve_adjoint(spec, probe)
    if g.grid != v.grid:
        raise ValueError("time profile and adjoint field live on different grids")
    w = trapezoid_weights(g.grid.n_steps) * g.grid.dt
    inner_t = f.mesh.h * (f.values @ v.interior)
    return float(np.sum(w * g.values * inner_t))


def flux_pairing(trace: FluxTrace, probe: Probe) -> float:
    """``int_0^T (d_nu u) psi dt`` on the probe's side."""
    return trace.inner(probe.as_trace(trace.sides)) if probe.side in trace.sides else 0.0


def integral_identity_residual(spec: ProblemSpec, f: MeshField, g: TimeSeries, probe,
                               g0: float | None = None):
    """Compare the flux pairing of the forward solution with ``-B_g(f, psi)``.

    ``probe`` may be a single :class:`Probe` or a list; the forward problem is
    solved once and a list of reports is returned in the second case.
    """
    from .forward import SourceSpec

    probes = [probe] if isinstance(probe, Probe) else list(probe)
    g0 = float(g.values[0]) if g0 is None else g0
    sides = tuple(sorted(set(spec.sides) | {p.side for p in probes}))
    u = solve_general(spec.with_(a=None, b=None, F=None, source=SourceSpec(f, g, g0)))
    trace = measure_flux(u, spec.coeff, sides)
    reports = []
    for p in probes:
        flux = flux_pairing(trace, p)
        bil = bilinear_form(spec, f, g, p)
        res = abs(flux + bil)
        scale = max(abs(flux), abs(bil))
        reports.append(BilinearReport(bilinear=bil, flux_side=flux, abs_residual=res,
                                      rel_residual=res / scale if scale > 0 else 0.0))
    return reports[0] if isinstance(probe, Probe) else reports


def b_norm(spec: ProblemSpec, f: MeshField, g: TimeSeries, probes: list[Probe] | None = None,
           direct: bool = False, g0: float | None = None, fields: list[SpaceTimeField] | None = None) -> float:
    """Norm of ``f`` induced by the bilinear form.

    Direct mode returns ``||K f||`` in the data inner product over the
    observed sides. Dictionary mode returns ``max_k |B_g(f, psi_k)|`` over
    unit probes, which approaches the direct value from below.
    ``fields`` may carry precomputed adjoint fields, one per probe.
    """
    from .forward import SourceSpec

    if direct:
        if not np.any(f.values):
            return 0.0
        g0 = float(g.values[0]) if g0 is None else g0
        u = solve_general(spec.with_(a=None, b=None, F=None, source=SourceSpec(f, g, g0)))
        return measure_flux(u, spec.coeff, spec.sides).norm()
    if not probes:
        raise ValueError("dictionary mode needs at least one probe")
    if fields is None:
        fields = [solve_adjoint(spec, p) for p in probes]
    return max(abs(bilinear_form(spec, f, g, v=v)) for v in fields)
