"""Self-checks runnable from the command line, one line per check.

Every check reports the measured quantity next to its tolerance. The cases are
small enough to finish in seconds, except ``ucp`` which runs a long horizon.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import rgamma

from .adjoint import integral_identity_residual, probe_dictionary
from .forward import ProblemSpec, SourceSpec, duhamel_solve, solve_general
from .fracops import (
    TimeGrid,
    TimeSeries,
    convolve_trapezoid,
    rl_integral,
    rl_integral_backward,
    trapezoid_weights,
)
from .inverse import assemble_forward_map, stability_experiment
from .mlf import mittag_leffler
from .spatial import Coefficients, MeshField, SpatialMesh
from .ucp import LaplaceGrid, ucp_correspondence_report

logger = logging.getLogger(__name__)

__all__ = ["Check", "SUITES", "run_suite", "format_checks"]


@dataclass(frozen=True)
class Check:
    suite: str
    name: str
    measured: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.measured) and self.measured <= self.tolerance)


def _mlf_checks(alpha: float) -> list[Check]:
    out = []
    z = -np.logspace(-1, 4, 41)
    for a in (1.1, 1.5, 1.9):
        for beta in (1.0, 2.0, a):
            lhs = mittag_leffler(z, a, beta)
            zE = z * mittag_leffler(z, a, a + beta)
            scale = np.maximum(np.abs(zE), abs(float(rgamma(beta))))
            err = np.max(np.abs(lhs - rgamma(beta) - zE) / scale)
            out.append(Check("mlf", f"recurrence a={a} b={beta:.3g}", float(err), 1e-10))
    lam, t, eps = 4.0, np.linspace(0.2, 3.0, 15), 1e-5

    def e1(s):
        return mittag_leffler(-lam * s**alpha, alpha, 1.0)

    def e2t(s):
        return s * mittag_leffler(-lam * s**alpha, alpha, 2.0)

    d1 = (e1(t + eps) - e1(t - eps)) / (2 * eps)
    rhs1 = -lam * t ** (alpha - 1) * mittag_leffler(-lam * t**alpha, alpha, alpha)
    out.append(Check("mlf", "d/dt E1 = -lam t^(a-1) E_aa", float(np.max(np.abs(d1 - rhs1))), 1e-8))
    d2 = (e2t(t + eps) - e2t(t - eps)) / (2 * eps)
    out.append(Check("mlf", "d/dt t E2 = E1", float(np.max(np.abs(d2 - e1(t)))), 1e-8))
    for a in (1.1, 1.5, 1.9):
        zs = -np.linspace(2.05, 3.0, 9)
        s = mittag_leffler(zs, a, 1.0, method="series")
        i = mittag_leffler(zs, a, 1.0, method="integral")
        out.append(Check("mlf", f"series vs integral a={a}", float(np.max(np.abs(s - i) / np.abs(i))), 1e-10))
        za = -np.linspace(45.0, 80.0, 8) ** a
        s = mittag_leffler(za, a, 1.0, method="asymptotic")
        i = mittag_leffler(za, a, 1.0, method="integral")
        out.append(Check("mlf", f"asymptotic vs integral a={a}", float(np.max(np.abs(s - i) / np.abs(i))), 1e-10))
    return out


def _fracops_checks(alpha: float) -> list[Check]:
    grid = TimeGrid(1.0, 512)
    dt2 = grid.dt**2
    t = grid.nodes
    f = TimeSeries(grid, np.sin(t) + 0.5 * t**2)
    # f(0) = g(T) = 0: the outer trapezoid sum cannot resolve the endpoint
    # singularities t^gamma f(0) g(0) and (T - t)^gamma f(T) g(T)
    g = TimeSeries(grid, (1.0 - t) * np.cos(2 * t))
    out = []
    for a, b in ((0.3, 0.7), (0.5, 0.5), (0.9, 0.6)):
        two = rl_integral(a, rl_integral(b, f)).values
        one = rl_integral(a + b, f).values
        out.append(Check("fracops", f"semigroup ({a}, {b}) / dt^2", float(np.max(np.abs(two - one))) / dt2, 10.0))
    w = trapezoid_weights(grid.n_steps) * grid.dt
    for gam in (0.4, 2.0 - alpha, alpha - 1.0):
        lhs = np.sum(w * rl_integral(gam, f).values * g.values)
        rhs = np.sum(w * f.values * rl_integral_backward(gam, g).values)
        out.append(Check("fracops", f"duality gamma={gam:.3g} / dt^2", abs(lhs - rhs) / dt2, 10.0))
    kern = np.exp(-t)
    h = TimeSeries(grid, np.sin(3 * t))
    for gam in (0.3, 2.0 - alpha):
        lhs = rl_integral(gam, TimeSeries(grid, convolve_trapezoid(kern, h.values, grid.dt))).values
        rhs = convolve_trapezoid(kern, rl_integral(gam, h).values, grid.dt)
        out.append(Check("fracops", f"convolution interchange gamma={gam:.3g} / dt^2",
                         float(np.max(np.abs(lhs - rhs))) / dt2, 10.0))
    return out


def _nonsym() -> Coefficients:
    return Coefficients(a=lambda x: 1.0 + 0.5 * x, B=lambda x: 0.3 + 0.1 * x, c=lambda x: 0.2 + 0 * x,
                        a0=1.0, B_prime=lambda x: 0.1 + 0 * x)


def _duhamel_checks(alpha: float) -> list[Check]:
    mesh, grid = SpatialMesh(0.0, 1.0, 31), TimeGrid(1.0, 128)
    f = MeshField.from_function(mesh, lambda x: np.sin(np.pi * x) + x * (1 - x))
    out = []
    for label, fn, g0, gp in (("1", lambda t: 1.0 + 0 * t, 1.0, lambda t: 0 * t),
                              ("1+t", lambda t: 1.0 + t, 1.0, lambda t: 1.0 + 0 * t),
                              ("2+sin t", lambda t: 2.0 + np.sin(t), 2.0, np.cos)):
        g = TimeSeries.from_function(grid, fn)
        for cname, coeff in (("symmetric", Coefficients.constant()), ("nonsymmetric", _nonsym())):
            spec = ProblemSpec(alpha, mesh, coeff, grid, source=SourceSpec(f, g, g0, gp))
            ref = solve_general(spec).interior
            err = np.linalg.norm(duhamel_solve(spec).interior - ref) / np.linalg.norm(ref)
            out.append(Check("duhamel", f"g={label} {cname}", float(err), 1e-3))
    return out


def _identity_checks(alpha: float) -> list[Check]:
    mesh, grid = SpatialMesh(0.0, 1.0, 127), TimeGrid(1.0, 256)
    f = MeshField.from_function(mesh, lambda x: np.sin(np.pi * x) + 0.5 * np.sin(2 * np.pi * x))
    g = TimeSeries.from_function(grid, lambda t: 1.0 + t)
    probes = probe_dictionary(grid, ("right",), K=4)
    out = []
    for cname, coeff, tol in (("symmetric", Coefficients.constant(), 1e-3), ("nonsymmetric", _nonsym(), 5e-3)):
        spec = ProblemSpec(alpha, mesh, coeff, grid)
        reps = integral_identity_residual(spec, f, g, probes, g0=1.0)
        out.append(Check("identity", f"{cname}, {len(probes)} probes", max(r.rel_residual for r in reps), tol))
    return out


def _stability_checks(alpha: float) -> list[Check]:
    mesh, grid = SpatialMesh(0.0, 1.0, 31), TimeGrid(1.0, 64)
    spec = ProblemSpec(alpha, mesh, Coefficients.constant(1.0, 0.3, 0.1), grid)
    g = TimeSeries.from_function(grid, lambda t: 1.0 + t)
    fmap = assemble_forward_map(spec, g, 1.0)
    rng = np.random.default_rng(42)
    pairs = [(MeshField(mesh, rng.standard_normal(mesh.n_interior)), MeshField(mesh, rng.standard_normal(mesh.n_interior)))
             for _ in range(5)]
    rows = stability_experiment(fmap, pairs)
    return [Check("stability", "max |ratio - 1| over 5 pairs", max(abs(r.ratio - 1.0) for r in rows), 5e-3)]


def _ucp_checks(alpha: float) -> list[Check]:
    mesh = SpatialMesh(0.0, 1.0, 31)
    rng = np.random.default_rng(42)
    x = mesh.nodes
    b = sum(rng.standard_normal() * np.sin(k * np.pi * x) / k for k in range(1, 5))
    spec = ProblemSpec(alpha, mesh, Coefficients.constant(1.0, 0.3, 0.1), TimeGrid(1.0, 8), b=MeshField(mesh, b))
    rep = ucp_correspondence_report(spec, LaplaceGrid())
    return [Check("ucp", f"{name} worst over s", max(r.mismatch for r in getattr(rep, name)), 2e-2)
            for name in ("resolvent", "parabolic", "flux")]


SUITES = {
    "mlf": _mlf_checks,
    "fracops": _fracops_checks,
    "duhamel": _duhamel_checks,
    "identity": _identity_checks,
    "stability": _stability_checks,
    "ucp": _ucp_checks,
}


def run_suite(name: str, alpha: float = 1.5) -> list[Check]:
    """Run one suite, or every suite for ``name == 'all'``."""
    if name == "all":
        return [c for key in SUITES for c in SUITES[key](alpha)]
    if name not in SUITES:
        raise KeyError(f"unknown suite {name!r}; valid: {', '.join([*SUITES, 'all'])}")
    return SUITES[name](alpha)


def format_checks(checks: list[Check]) -> str:
    width = max((len(c.name) for c in checks), default=10)
    lines = [f"{'suite':<10} {'check':<{width}} {'measured':>12} {'tolerance':>12}  result"]
    for c in checks:
        lines.append(f"{c.suite:<10} {c.name:<{width}} {c.measured:12.3e} {c.tolerance:12.3e}  "
                     f"{'PASS' if c.passed else 'FAIL'}")
    return "\n".join(lines)
