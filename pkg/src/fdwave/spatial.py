"""Finite differences for ``A = A0 + B d/dx + c`` on an interval with Dirichlet ends.

``A0 u = -(a u')'`` uses the conservative stencil with ``a`` sampled at the
half nodes, so the matrix is exactly symmetric. Mesh fields hold interior
values only; boundary values are zero unless stated otherwise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.linalg import eigh_tridiagonal, solve_banded

logger = logging.getLogger(__name__)

__all__ = [
    "SpatialMesh",
    "Coefficients",
    "EigenBasis",
    "MeshField",
    "TridiagonalOperator",
    "assemble_a0",
    "eigendecompose",
    "first_order_matrix",
    "apply_first_order",
    "apply_divergence_companion",
    "conormal_flux",
    "flux_functional",
    "fractional_power_apply",
    "full_operator_banded",
]

SIDES = ("left", "right")


@dataclass(frozen=True)
class SpatialMesh:
    x_L: float
    x_R: float
    n_interior: int

    def __post_init__(self) -> None:
        if not self.x_R > self.x_L:
            raise ValueError(f"need x_L < x_R, got ({self.x_L}, {self.x_R})")
        if int(self.n_interior) != self.n_interior or self.n_interior < 1:
            raise ValueError(f"n_interior must be a positive integer, got {self.n_interior}")

    @property
    def h(self) -> float:
        return (self.x_R - self.x_L) / (self.n_interior + 1)

    @property
    def nodes(self) -> np.ndarray:
        return self.x_L + self.h * np.arange(1, self.n_interior + 1)

    @property
    def all_nodes(self) -> np.ndarray:
        return self.x_L + self.h * np.arange(self.n_interior + 2)

    @property
    def half_nodes(self) -> np.ndarray:
        # x_{i-1/2} for i = 1..N+1
        return self.x_L + self.h * (np.arange(self.n_interior + 1) + 0.5)


def _sample(fn, x: np.ndarray) -> np.ndarray:
    return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape).copy()


@dataclass(frozen=True)
class Coefficients:
    """Coefficient callbacks of ``A``, sampled on demand.

    ``a`` must stay above ``a0 > 0``. ``B_prime`` is only needed by the
    nondivergence form of the adjoint operator; a central difference of ``B``
    is used when it is omitted.
    """

    a: Callable
    B: Callable
    c: Callable
    a0: float
    B_prime: Callable | None = None

    @classmethod
    def constant(cls, a=1.0, B=0.0, c=0.0, a0=None) -> "Coefficients":
        return cls(
            a=lambda x: np.full_like(x, a, dtype=float),
            B=lambda x: np.full_like(x, B, dtype=float),
            c=lambda x: np.full_like(x, c, dtype=float),
            a0=a if a0 is None else a0,
            B_prime=lambda x: np.zeros_like(x, dtype=float),
        )

    def a_half(self, mesh: SpatialMesh) -> np.ndarray:
        return _sample(self.a, mesh.half_nodes)

    def B_nodes(self, mesh: SpatialMesh) -> np.ndarray:
        return _sample(self.B, mesh.nodes)

    def c_nodes(self, mesh: SpatialMesh) -> np.ndarray:
        return _sample(self.c, mesh.nodes)

    def B_prime_nodes(self, mesh: SpatialMesh) -> np.ndarray:
        x = mesh.nodes
        if self.B_prime is not None:
            return _sample(self.B_prime, x)
        eps = 1e-5 * max(1.0, float(np.abs(x).max()))
        return (_sample(self.B, x + eps) - _sample(self.B, x - eps)) / (2.0 * eps)

    def is_symmetric(self, mesh: SpatialMesh) -> bool:
        return bool(np.all(self.B_nodes(mesh) == 0) and np.all(self.c_nodes(mesh) == 0))


@dataclass(frozen=True)
class MeshField:
    mesh: SpatialMesh
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.mesh.n_interior,):
            raise ValueError(f"expected {self.mesh.n_interior} interior values, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, mesh: SpatialMesh, fn) -> "MeshField":
        return cls(mesh, _sample(fn, mesh.nodes))

    def inner(self, other: "MeshField") -> float:
        return float(self.mesh.h * self.values @ other.values)

    def norm(self) -> float:
        return float(np.sqrt(self.inner(self)))


@dataclass(frozen=True)
class TridiagonalOperator:
    """Symmetric tridiagonal matrix stored by its diagonals."""

    mesh: SpatialMesh
    diag: np.ndarray
    offdiag: np.ndarray

    def dense(self) -> np.ndarray:
        return np.diag(self.diag) + np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)

    def matvec(self, u: np.ndarray) -> np.ndarray:
        out = self.diag * u
        out[:-1] += self.offdiag * u[1:]
        out[1:] += self.offdiag * u[:-1]
        return out


@dataclass(frozen=True)
class EigenBasis:
    """Eigenpairs of A0; columns of ``phis`` are h-orthonormal."""

    mesh: SpatialMesh
    lambdas: np.ndarray
    phis: np.ndarray

    @property
    def size(self) -> int:
        return self.lambdas.size

    def project(self, u: np.ndarray) -> np.ndarray:
        """Coefficients ``<u, phi_n>_h``; ``u`` may carry trailing axes."""
        return self.mesh.h * self.phis.T @ u

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        return self.phis @ coeffs

    def mode(self, n: int) -> MeshField:
        """The ``n``-th eigenfunction, counting from 1."""
        return MeshField(self.mesh, self.phis[:, n - 1].copy())


def assemble_a0(mesh: SpatialMesh, coeff: Coefficients) -> TridiagonalOperator:
    """Symmetric positive definite stencil of ``-(a u')'``."""
    ah = coeff.a_half(mesh)
    if not np.all(np.isfinite(ah)):
        raise ValueError("diffusion coefficient is not finite on the mesh")
    if coeff.a0 <= 0 or np.any(ah < coeff.a0):
        bad = mesh.half_nodes[ah < coeff.a0]
        raise ValueError(f"diffusion coefficient drops below a0={coeff.a0} near x={bad[:3]}")
    h2 = mesh.h**2
    return TridiagonalOperator(mesh, (ah[:-1] + ah[1:]) / h2, -ah[1:-1] / h2)


def eigendecompose(op: TridiagonalOperator) -> EigenBasis:
    """All eigenpairs by the implicit QL/QR tridiagonal solver.

    Eigenvectors are scaled to unit h-norm and signed so that their first
    interior value is positive.
    """
    try:
        lam, vec = eigh_tridiagonal(op.diag, op.offdiag, lapack_driver="stev")
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"tridiagonal eigensolver failed: {exc}") from exc
    vec = vec / np.sqrt(op.mesh.h)
    sign = np.where(vec[0] < 0, -1.0, 1.0)
    return EigenBasis(op.mesh, lam, vec * sign)


def first_order_matrix(mesh: SpatialMesh, coeff: Coefficients) -> np.ndarray:
    """Dense matrix of ``B u' + c u`` with central differences."""
    n = mesh.n_interior
    B = coeff.B_nodes(mesh)
    P = np.diag(coeff.c_nodes(mesh))
    i = np.arange(n - 1)
    P[i, i + 1] += B[:-1] / (2.0 * mesh.h)
    P[i + 1, i] -= B[1:] / (2.0 * mesh.h)
    return P


def apply_first_order(mesh: SpatialMesh, coeff: Coefficients, u: MeshField) -> MeshField:
    """``B_i (u_{i+1} - u_{i-1}) / (2h) + c_i u_i`` with zero boundary neighbours."""
    v = np.pad(u.values, 1)
    B = coeff.B_nodes(mesh)
    return MeshField(mesh, B * (v[2:] - v[:-2]) / (2.0 * mesh.h) + coeff.c_nodes(mesh) * u.values)


def apply_divergence_companion(mesh: SpatialMesh, coeff: Coefficients, u: MeshField) -> MeshField:
    """``-(B u)' + c u`` by central differences; the transpose of :func:`apply_first_order`."""
    Bu = np.pad(coeff.B_nodes(mesh) * u.values, 1)
    return MeshField(mesh, -(Bu[2:] - Bu[:-2]) / (2.0 * mesh.h) + coeff.c_nodes(mesh) * u.values)


def flux_functional(mesh: SpatialMesh, coeff: Coefficients, side: str) -> np.ndarray:
    """Row vector ``r`` with ``conormal_flux(u) = r @ u``."""
    if side not in SIDES:
        raise ValueError(f"side must be 'left' or 'right', got {side!r}")
    n = mesh.n_interior
    if n < 2:
        raise ValueError("conormal flux needs at least 2 interior nodes")
    r = np.zeros(n)
    if side == "right":
        # u_x(x_R) ~ (3 u_{N+1} - 4 u_N + u_{N-1}) / (2h) with u_{N+1} = 0
        aR = float(_sample(coeff.a, np.array([mesh.x_R]))[0])
        r[-1] = -4.0 * aR / (2.0 * mesh.h)
        r[-2] = aR / (2.0 * mesh.h)
    else:
        # outward normal is -x; u_x(x_L) ~ (4 u_1 - u_2) / (2h)
        aL = float(_sample(coeff.a, np.array([mesh.x_L]))[0])
        r[0] = -4.0 * aL / (2.0 * mesh.h)
        r[1] = aL / (2.0 * mesh.h)
    return r


def conormal_flux(mesh: SpatialMesh, coeff: Coefficients, u: MeshField, side: str) -> float:
    """Outward conormal derivative ``a u_x nu`` at one endpoint."""
    return float(flux_functional(mesh, coeff, side) @ u.values)


def fractional_power_apply(basis: EigenBasis, gamma: float, u: MeshField) -> MeshField:
    """``sum_n lambda_n**gamma <u, phi_n>_h phi_n``."""
    return MeshField(u.mesh, basis.synthesize(basis.lambdas**gamma * basis.project(u.values)))


def full_operator_banded(mesh: SpatialMesh, coeff: Coefficients, shift: float = 0.0) -> np.ndarray:
    """``A + shift`` in the (1, 1) banded layout of :func:`scipy.linalg.solve_banded`."""
    op = assemble_a0(mesh, coeff)
    B = coeff.B_nodes(mesh)
    ab = np.zeros((3, mesh.n_interior))
    ab[1] = op.diag + coeff.c_nodes(mesh) + shift
    ab[0, 1:] = op.offdiag + B[:-1] / (2.0 * mesh.h)
    ab[2, :-1] = op.offdiag - B[1:] / (2.0 * mesh.h)
    return ab


def banded_solve(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    return solve_banded((1, 1), ab, rhs)
