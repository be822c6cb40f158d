"""Forward solver for ``d_t^alpha u + A u = F`` with Dirichlet ends, 1 < alpha < 2.

The solution is expanded in the eigenbasis of the symmetric part A0. Each
mode obeys the Volterra equation

    y_n(t) = a_n E1(t) + b_n t E2(t) + int_0^t k_n(t - s) [F_n(s) - (P y)_n(s)] ds,

with ``k_n(t) = t^(alpha-1) E_{alpha,alpha}(-lambda_n t^alpha)`` and ``P`` the
first-order part ``B d/dx + c`` written in modal coordinates. The memory
integral uses product integration: the integrand is interpolated linearly in
time and the kernel moments come from the exact antiderivatives
``t^alpha E_{alpha,alpha+1}`` and ``t^(alpha+1) E_{alpha,alpha+2}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Callable

import numpy as np
import scipy.linalg as sla
from scipy.special import gamma as gamma_fn

from .fracops import TimeGrid, TimeSeries, convolve_values, duhamel_kernel, trapezoid_weights
from .mlf import relaxation_table
from .spatial import (
    Coefficients,
    EigenBasis,
    MeshField,
    SpatialMesh,
    assemble_a0,
    eigendecompose,
    first_order_matrix,
    flux_functional,
)

logger = logging.getLogger(__name__)

__all__ = [
    "FractionalOrder",
    "SourceSpec",
    "ProblemSpec",
    "SpaceTimeField",
    "FluxTrace",
    "ModalWeights",
    "NumericalInstabilityError",
    "PicardReport",
    "GrowthReport",
    "solve_symmetric",
    "solve_general",
    "picard_iterate",
    "duhamel_solve",
    "measure_flux",
    "growth_sanity",
]

BLOWUP_LIMIT = 1e12


class NumericalInstabilityError(ArithmeticError):
    pass


@dataclass(frozen=True)
class FractionalOrder:
    alpha: float

    def __post_init__(self) -> None:
        if not 1.0 < self.alpha < 2.0:
            raise ValueError(f"alpha must lie in (1, 2), got {self.alpha}")

    @cached_property
    def exponents(self) -> dict[str, tuple[float, float]]:
        """Derived exponents mapped to ``(value, Gamma(value))``."""
        a = self.alpha
        return {k: (v, float(gamma_fn(v))) for k, v in (("2-a", 2 - a), ("a-1", a - 1), ("a/2", a / 2))}


@dataclass(frozen=True)
class SourceSpec:
    """Separable source ``f(x) g(t)``; ``g0`` is the exact value ``g(0)``."""

    f: MeshField
    g: TimeSeries
    g0: float
    g_prime: Callable | None = None

    def samples(self) -> np.ndarray:
        return np.outer(self.f.values, self.g.values)


@dataclass(frozen=True)
class ProblemSpec:
    """Everything the forward solvers need.

    ``a`` and ``b`` are the initial position and velocity. The source is either
    a :class:`SourceSpec` or node samples ``F`` of shape ``(n_interior, n_steps+1)``.
    """

    alpha: float
    mesh: SpatialMesh
    coeff: Coefficients
    grid: TimeGrid
    a: MeshField | None = None
    b: MeshField | None = None
    source: SourceSpec | None = None
    F: np.ndarray | None = None
    sides: tuple[str, ...] = ("right",)
    n_modes: int | None = None

    def __post_init__(self) -> None:
        FractionalOrder(self.alpha)
        if self.source is not None and self.F is not None:
            raise ValueError("give either a separable source or node samples F, not both")
        if self.F is not None and np.shape(self.F) != (self.mesh.n_interior, self.grid.size):
            raise ValueError(f"F must have shape {(self.mesh.n_interior, self.grid.size)}")
        if self.source is not None and self.source.g.grid != self.grid:
            raise ValueError("source time profile lives on a different grid")
        if self.n_modes is not None and not 1 <= self.n_modes <= self.mesh.n_interior:
            raise ValueError(f"n_modes must lie in [1, {self.mesh.n_interior}]")
        for s in self.sides:
            if s not in ("left", "right"):
                raise ValueError(f"unknown boundary side {s!r}")

    @cached_property
    def basis(self) -> EigenBasis:
        full = eigendecompose(assemble_a0(self.mesh, self.coeff))
        if self.n_modes is None or self.n_modes == full.size:
            return full
        k = self.n_modes
        return EigenBasis(self.mesh, full.lambdas[:k], full.phis[:, :k])

    @cached_property
    def weights(self) -> "ModalWeights":
        return ModalWeights.build(self.alpha, self.basis.lambdas, self.grid)

    @cached_property
    def modal_first_order(self) -> np.ndarray:
        """``<P phi_k, phi_n>_h``; zero matrix when B and c vanish."""
        P = first_order_matrix(self.mesh, self.coeff)
        return self.basis.project(P @ self.basis.phis)

    def source_samples(self) -> np.ndarray | None:
        if self.source is not None:
            return self.source.samples()
        return None if self.F is None else np.asarray(self.F, dtype=float)

    def with_(self, **changes) -> "ProblemSpec":
        """Copy with fields replaced, reusing the cached basis and weights when valid."""
        new = replace(self, **changes)
        same_a0 = not ({"alpha", "mesh", "grid", "n_modes"} & changes.keys()) and new.coeff.a is self.coeff.a
        reuse = ("basis", "weights") if same_a0 else ()
        if same_a0 and new.coeff is self.coeff:
            reuse += ("modal_first_order",)
        for name in reuse:
            if name in self.__dict__:
                new.__dict__[name] = self.__dict__[name]
        return new


@dataclass(frozen=True)
class SpaceTimeField:
    """Values on the full tensor grid, boundary rows included.

    ``values[i, m]`` is ``u(x_i, t_m)`` for ``i = 0..n_interior+1``.
    """

    mesh: SpatialMesh
    grid: TimeGrid
    values: np.ndarray

    @classmethod
    def from_interior(cls, mesh: SpatialMesh, grid: TimeGrid, interior: np.ndarray,
                      left=None, right=None) -> "SpaceTimeField":
        full = np.zeros((mesh.n_interior + 2, grid.size))
        full[1:-1] = interior
        if left is not None:
            full[0] = left
        if right is not None:
            full[-1] = right
        return cls(mesh, grid, full)

    @property
    def interior(self) -> np.ndarray:
        return self.values[1:-1]

    def snapshot(self, m: int) -> MeshField:
        return MeshField(self.mesh, self.interior[:, m].copy())

    def reversed(self) -> "SpaceTimeField":
        return SpaceTimeField(self.mesh, self.grid, self.values[:, ::-1].copy())


@dataclass(frozen=True)
class FluxTrace:
    """Outward conormal derivative per observed side; ``values`` has shape (n_sides, n_t)."""

    grid: TimeGrid
    sides: tuple[str, ...]
    values: np.ndarray

    def side(self, name: str) -> TimeSeries:
        return TimeSeries(self.grid, self.values[self.sides.index(name)])

    def inner(self, other: "FluxTrace") -> float:
        """Data inner product: trapezoid in time, summed over sides."""
        w = trapezoid_weights(self.grid.n_steps) * self.grid.dt
        return float(np.sum(self.values * other.values * w))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))


@dataclass(frozen=True)
class ModalWeights:
    """Product-integration weights of the mode kernels ``k_n``.

    For lag interval ``[l dt, (l+1) dt]`` the kernel integrated against the
    rising hat is ``L[:, l]`` and against the falling hat ``R[:, l]``. The
    weight of node ``j`` in the value at node ``m`` is
    ``L[m-j] (j >= 1) + R[m-j-1] (j <= m-1)``.
    """

    L: np.ndarray
    R: np.ndarray
    e1: np.ndarray
    e2t: np.ndarray
    kern: np.ndarray

    @classmethod
    def build(cls, alpha: float, lambdas: np.ndarray, grid: TimeGrid) -> "ModalWeights":
        tab = relaxation_table(alpha, lambdas, grid.nodes)
        g1, g2 = tab["g1"], tab["g2"]
        dt = grid.dt
        I0 = np.diff(g1, axis=1)
        R = g1[:, 1:] - np.diff(g2, axis=1) / dt
        L = I0 - R
        return cls(L=L, R=R, e1=tab["e1"], e2t=tab["e2t"], kern=tab["kern"])

    @property
    def toeplitz(self) -> np.ndarray:
        """``c[:, l] = L[:, l] + R[:, l-1]`` for lags ``l >= 1``; ``c[:, 0] = L[:, 0]``."""
        c = self.L.copy()
        c[:, 1:] += self.R[:, :-1]
        return c

    def convolve(self, z: np.ndarray) -> np.ndarray:
        """Apply the full weight matrix (self-weight included) along the last axis.

        ``z`` has shape (n_modes, ..., n_t); the first axis must match the modes.
        """
        n_t = z.shape[-1]
        c = self.toeplitz
        out = np.zeros_like(z, dtype=float)
        extra = z.ndim - 2
        for m in range(1, n_t):
            # nodes 1..m with lags m-1..0, node 0 with R[m-1]
            w = c[:, m - 1 :: -1].reshape(c.shape[0], *([1] * extra), m)
            out[..., m] = np.sum(w * z[..., 1 : m + 1], axis=-1)
            out[..., m] += self.R[:, m - 1].reshape(-1, *([1] * extra)) * z[..., 0]
        return out


def _check_finite(y: np.ndarray, m: int, dt: float) -> None:
    peak = np.max(np.abs(y))
    if not np.isfinite(peak) or peak > BLOWUP_LIMIT:
        raise NumericalInstabilityError(
            f"solution magnitude {peak:.3e} exceeds {BLOWUP_LIMIT:.0e} at t={m * dt:.6g} (step {m})"
        )


def _free_part(spec: ProblemSpec) -> np.ndarray:
    """Modal homogeneous response plus the source memory term, shape (n_modes, n_t)."""
    basis, w = spec.basis, spec.weights
    out = np.zeros((basis.size, spec.grid.size))
    if spec.a is not None:
        out += basis.project(spec.a.values)[:, None] * w.e1
    if spec.b is not None:
        out += basis.project(spec.b.values)[:, None] * w.e2t
    F = spec.source_samples()
    if F is not None:
        out += w.convolve(basis.project(F))
    return out


def march(weights: ModalWeights, Phat: np.ndarray, free: np.ndarray) -> np.ndarray:
    """Causal sweep for ``y = free - W (Phat y)``, batched over middle axes.

    ``free`` has shape (n_modes, n_t) or (n_modes, n_batch, n_t). The self
    weight ``L[:, 0]`` makes every step a small implicit solve; the matrix
    ``I + diag(L0) Phat`` is factored once.
    """
    squeeze = free.ndim == 2
    if squeeze:
        free = free[:, None, :]
    n, nb, n_t = free.shape
    c = weights.toeplitz
    dt_guess = 1.0 / max(n_t - 1, 1)
    y = np.zeros_like(free)
    z = np.zeros_like(free)
    y[:, :, 0] = free[:, :, 0]
    z[:, :, 0] = Phat @ y[:, :, 0]
    lu = sla.lu_factor(np.eye(n) + weights.L[:, :1] * Phat)
    for m in range(1, n_t):
        hist = np.einsum("nbj,nj->nb", z[:, :, 1:m], c[:, m - 1 : 0 : -1]) if m > 1 else 0.0
        hist = hist + weights.R[:, m - 1 : m] * z[:, :, 0]
        y[:, :, m] = sla.lu_solve(lu, free[:, :, m] - hist)
        z[:, :, m] = Phat @ y[:, :, m]
        if m % 64 == 0 or m == n_t - 1:
            _check_finite(y[:, :, m], m, dt_guess)
    return y[:, 0, :] if squeeze else y


def solve_symmetric(spec: ProblemSpec) -> SpaceTimeField:
    """Spectral solution when ``B`` and ``c`` vanish identically."""
    if not spec.coeff.is_symmetric(spec.mesh):
        raise ValueError("solve_symmetric requires B = 0 and c = 0")
    y = _free_part(spec)
    return SpaceTimeField.from_interior(spec.mesh, spec.grid, spec.basis.synthesize(y))


def solve_general(spec: ProblemSpec) -> SpaceTimeField:
    """One causal sweep of the discrete Volterra equation including ``B u' + c u``.

    Raises
    ------
    NumericalInstabilityError
        If values exceed 1e12.
    """
    y = march(spec.weights, spec.modal_first_order, _free_part(spec))
    _check_finite(y, spec.grid.n_steps, spec.grid.dt)
    return SpaceTimeField.from_interior(spec.mesh, spec.grid, spec.basis.synthesize(y))


@dataclass
class PicardReport:
    field: SpaceTimeField
    deltas: list[float]
    converged: bool
    iterations: int

    def ratios(self) -> np.ndarray:
        d = np.asarray(self.deltas)
        return d[1:] / d[:-1]


def picard_iterate(spec: ProblemSpec, max_iters: int = 100, tol: float = 1e-10) -> PicardReport:
    """Fixed-point iteration ``u_{n+1} = Psi + N u_n`` from ``u_0 = 0`` over the whole grid.

    ``deltas[k]`` is the sup-norm change produced by iteration ``k + 1``.
    """
    basis, w = spec.basis, spec.weights
    Phat = spec.modal_first_order
    free = _free_part(spec)
    y = np.zeros_like(free)
    deltas: list[float] = []
    converged = False
    for it in range(max_iters):
        y_new = free - w.convolve(Phat @ y)
        delta = float(np.max(np.abs(basis.synthesize(y_new - y))))
        deltas.append(delta)
        y = y_new
        if not np.isfinite(delta):
            raise NumericalInstabilityError(f"Picard iteration diverged at step {it + 1}")
        if delta < tol:
            converged = True
            break
    if not converged:
        logger.warning("Picard iteration stopped after %d steps, last delta %.3e", max_iters, deltas[-1])
    field_ = SpaceTimeField.from_interior(spec.mesh, spec.grid, basis.synthesize(y))
    return PicardReport(field=field_, deltas=deltas, converged=converged, iterations=len(deltas))


def duhamel_solve(spec: ProblemSpec) -> SpaceTimeField:
    """Source-driven solution as ``int_0^t rho(t-s) v(s) ds``.

    ``v`` solves the homogeneous problem with zero position and velocity ``f``;
    ``rho`` satisfies ``J^{2-alpha} rho = g``.
    """
    if spec.a is not None and np.any(spec.a.values) or spec.b is not None and np.any(spec.b.values):
        raise ValueError("duhamel_solve needs zero initial data")
    if spec.source is None:
        raise ValueError("duhamel_solve needs a separable source")
    src = spec.source
    v = solve_general(spec.with_(b=src.f, source=None, a=None))
    rho = duhamel_kernel(spec.alpha, src.g, src.g0, src.g_prime)
    u = convolve_values(rho, v.interior)
    return SpaceTimeField.from_interior(spec.mesh, spec.grid, u)


def flux_matrix(mesh: SpatialMesh, coeff: Coefficients, sides) -> np.ndarray:
    return np.stack([flux_functional(mesh, coeff, s) for s in sides])


def measure_flux(field_: SpaceTimeField, coeff: Coefficients, sides=("right",)) -> FluxTrace:
    """Conormal flux at every time node on the observed sides."""
    sides = tuple(sides)
    vals = flux_matrix(field_.mesh, coeff, sides) @ field_.interior
    return FluxTrace(field_.grid, sides, vals)


@dataclass
class GrowthReport:
    times: np.ndarray
    norms: np.ndarray
    C: float
    kappa: float
    worst_ratio: float
    passed: bool


def growth_sanity(spec: ProblemSpec, T_long: float, slack: float = 10.0) -> GrowthReport:
    """Check ``||A0 u(t)||_h <= C exp(kappa t)`` on ``(T_long/4, T_long]``.

    ``kappa`` is the log-linear slope over ``[T_long/8, T_long/4]`` (clipped at 0)
    and ``C`` the smallest constant covering ``[0, T_long/4]``; ``slack`` absorbs
    the oscillation of the Mittag-Leffler factors.
    """
    if spec.source is not None or spec.F is not None:
        raise ValueError("growth_sanity expects F = 0")
    n_steps = max(int(round(T_long / spec.grid.dt)), 8)
    long = spec.with_(grid=TimeGrid(T_long, n_steps))
    u = solve_general(long)
    op = assemble_a0(long.mesh, long.coeff)
    A0u = np.apply_along_axis(op.matvec, 0, u.interior)
    t = long.grid.nodes
    norms = np.sqrt(long.mesh.h * np.sum(A0u**2, axis=0))
    fit = (t >= T_long / 8) & (t <= T_long / 4) & (norms > 0)
    kappa = 0.0
    if fit.sum() >= 2:
        kappa = max(0.0, float(np.polyfit(t[fit], np.log(norms[fit]), 1)[0]))
    early = t <= T_long / 4
    C = float(np.max(norms[early] * np.exp(-kappa * t[early])))
    late = ~early
    ratio = norms[late] / (C * np.exp(kappa * t[late])) if C > 0 else np.zeros(late.sum())
    worst = float(ratio.max()) if ratio.size else 0.0
    return GrowthReport(t, norms, C, kappa, worst, worst <= slack)
