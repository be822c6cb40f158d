"""Laplace-domain checks behind the unique continuation argument.

For the homogeneous problem with zero position and velocity ``b`` the Laplace
transform of the solution satisfies ``(A + s^alpha) u_hat = s^(alpha-2) b``.
The same vector, scaled by ``s^(2-alpha)``, is the transform at
``eta = s^alpha`` of the parabolic companion ``p' + A p = 0, p(0) = b``.
Three routes are compared on a grid of ``s`` values; inverse transforms are
never taken.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .forward import ProblemSpec, flux_matrix, solve_general
from .fracops import TimeGrid
from .spatial import Coefficients, MeshField, SpatialMesh, banded_solve, first_order_matrix, full_operator_banded, assemble_a0

logger = logging.getLogger(__name__)

__all__ = [
    "LaplaceGrid",
    "LaplaceValue",
    "UcpRow",
    "UcpReport",
    "laplace_weights",
    "laplace_transform",
    "resolvent_solve",
    "implicit_euler",
    "ucp_correspondence_report",
]

DEFAULT_S = (2.0, 3.0, 5.0, 8.0, 10.0)


@dataclass(frozen=True)
class LaplaceGrid:
    s: tuple[float, ...] = DEFAULT_S
    T_long: float = 20.0

    def __post_init__(self) -> None:
        s = np.asarray(self.s, dtype=float)
        if s.size == 0 or np.any(s <= 0) or np.any(np.diff(s) <= 0):
            raise ValueError("Laplace variables must be positive and ascending")
        if s[0] * self.T_long < 10.0:
            raise ValueError(f"s_min * T_long = {s[0] * self.T_long:.3g} is below the truncation floor 10")


@dataclass(frozen=True)
class LaplaceValue:
    value: np.ndarray
    truncation_budget: float


def laplace_weights(grid: TimeGrid, s: float) -> np.ndarray:
    """Weights ``w_j`` with ``sum_j w_j u_j = int_0^T exp(-s t) u_I(t) dt``.

    ``u_I`` is the piecewise-linear interpolant, integrated exactly against
    the exponential; for ``u = 1`` the rule returns ``(1 - exp(-sT)) / s``.
    """
    if s <= 0:
        raise ValueError("Laplace variable must be positive")
    dt = grid.dt
    z = s * dt
    em = np.expm1(-z)
    # falling hat (node on the left) and rising hat (node on the right)
    left = dt * (z + em) / z**2
    right = dt * (-em - z * np.exp(-z)) / z**2
    decay = np.exp(-s * grid.nodes)
    w = np.zeros(grid.size)
    w[:-1] += left * decay[:-1]
    w[1:] += right * decay[:-1]
    return w


def laplace_transform(values: np.ndarray, grid: TimeGrid, s: float) -> LaplaceValue:
    """Transform along the last axis with a tail budget ``exp(-sT) max|u| max(1, 1/s)``."""
    values = np.asarray(values, dtype=float)
    if values.shape[-1] != grid.size:
        raise ValueError("data do not cover the time grid")
    w = laplace_weights(grid, s)
    budget = float(np.exp(-s * grid.T) * np.max(np.abs(values)) * max(1.0, 1.0 / s))
    return LaplaceValue(values @ w, budget)


def resolvent_solve(mesh: SpatialMesh, coeff: Coefficients, alpha: float, s: float, b: MeshField) -> MeshField:
    """Solve ``(A + s^alpha) w = s^(alpha-2) b`` with the tridiagonal ``A``."""
    if s <= 0:
        raise ValueError("Laplace variable must be positive")
    ab = full_operator_banded(mesh, coeff, shift=s**alpha)
    w = banded_solve(ab, s ** (alpha - 2.0) * b.values)
    if not np.all(np.isfinite(w)):
        raise np.linalg.LinAlgError(f"resolvent system is singular at s={s}")
    return MeshField(mesh, w)


def full_operator(mesh: SpatialMesh, coeff: Coefficients) -> np.ndarray:
    return assemble_a0(mesh, coeff).dense() + first_order_matrix(mesh, coeff)


def implicit_euler(mesh: SpatialMesh, coeff: Coefficients, b: MeshField, grid: TimeGrid) -> np.ndarray:
    """``p' + A p = 0, p(0) = b`` by implicit Euler; returns shape (n_interior, n_t)."""
    lu = sla.lu_factor(np.eye(mesh.n_interior) + grid.dt * full_operator(mesh, coeff))
    out = np.empty((mesh.n_interior, grid.size))
    out[:, 0] = b.values
    for k in range(1, grid.size):
        out[:, k] = sla.lu_solve(lu, out[:, k - 1])
    return out


@dataclass
class UcpRow:
    s: float
    route_a: float
    route_b: float
    mismatch: float
    truncation_budget: float


@dataclass
class UcpReport:
    """One list of rows per comparison.

    ``resolvent``: transform of the fractional solution vs the resolvent solve.
    ``parabolic``: parabolic transform at ``s^alpha`` vs ``s^(2-alpha)`` times the fractional transform.
    ``flux``: transform of the measured flux vs the conormal flux of the resolvent solution.
    Values are spatial maxima; ``mismatch`` is relative and net of the budget.
    """

    resolvent: list[UcpRow]
    parabolic: list[UcpRow]
    flux: list[UcpRow]

    def worst(self) -> float:
        return max(r.mismatch for rows in (self.resolvent, self.parabolic, self.flux) for r in rows)


def _row(s: float, a: np.ndarray, b: np.ndarray, budget: float) -> UcpRow:
    ref = float(np.max(np.abs(b)))
    gap = max(0.0, float(np.max(np.abs(a - b))) - budget)
    return UcpRow(s=s, route_a=float(np.max(np.abs(a))), route_b=ref,
                  mismatch=gap / ref if ref > 0 else gap, truncation_budget=budget)


def ucp_correspondence_report(spec: ProblemSpec, laplace: LaplaceGrid = LaplaceGrid(),
                              n_steps: int = 8000, parabolic_refine: int = 4) -> UcpReport:
    """Run all three routes for the velocity-driven problem of ``spec``.

    ``spec`` supplies alpha, mesh, coefficients, ``b`` and the observed sides;
    its time grid is replaced by ``[0, T_long]`` with ``n_steps`` steps. The
    parabolic companion uses ``parabolic_refine`` times more steps.
    """
    if spec.b is None:
        raise ValueError("the correspondence needs a nonzero initial velocity b")
    if (spec.a is not None and np.any(spec.a.values)) or spec.source is not None or spec.F is not None:
        raise ValueError("the correspondence needs a = 0 and F = 0")
    grid = TimeGrid(laplace.T_long, n_steps)
    long = spec.with_(grid=grid)
    u = solve_general(long).interior
    pgrid = TimeGrid(laplace.T_long, n_steps * parabolic_refine)
    p = implicit_euler(spec.mesh, spec.coeff, spec.b, pgrid)
    flux_rows = flux_matrix(spec.mesh, spec.coeff, spec.sides)
    flux_u = flux_rows @ u
    alpha = spec.alpha
    res_rows, par_rows, flux_out = [], [], []
    for s in laplace.s:
        uh = laplace_transform(u, grid, s)
        w = resolvent_solve(spec.mesh, spec.coeff, alpha, s, spec.b).values
        res_rows.append(_row(s, uh.value, w, uh.truncation_budget))
        ph = laplace_transform(p, pgrid, s**alpha)
        scale = s ** (2.0 - alpha)
        par_rows.append(_row(s, ph.value, scale * uh.value, ph.truncation_budget + scale * uh.truncation_budget))
        fh = laplace_transform(flux_u, grid, s)
        flux_out.append(_row(s, fh.value, flux_rows @ w, fh.truncation_budget))
    return UcpReport(resolvent=res_rows, parabolic=par_rows, flux=flux_out)
