"""Discrete fractional calculus on uniform time grids.

Every weakly singular kernel is integrated exactly against the piecewise-linear
interpolant of the data (product integration); the kernel is never sampled at
the nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as gamma_fn

__all__ = [
    "TimeGrid",
    "TimeSeries",
    "DuhamelKernel",
    "trapezoid_weights",
    "rl_weights",
    "rl_integral",
    "rl_integral_backward",
    "derivative",
    "caputo_shifted",
    "duhamel_kernel",
    "convolve_singular",
    "convolve_trapezoid",
]


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid ``t_m = m * T / n_steps`` on ``[0, T]``."""

    T: float
    n_steps: int

    def __post_init__(self) -> None:
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"T must be positive, got {self.T}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ValueError(f"n_steps must be a positive integer, got {self.n_steps}")

    @property
    def dt(self) -> float:
        return self.T / self.n_steps

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    @property
    def size(self) -> int:
        return self.n_steps + 1


@dataclass(frozen=True)
class TimeSeries:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.size,):
            raise ValueError(f"expected {self.grid.size} samples, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: TimeGrid, fn) -> "TimeSeries":
        return cls(grid, np.broadcast_to(np.asarray(fn(grid.nodes), dtype=float), (grid.size,)).copy())

    def reversed(self) -> "TimeSeries":
        return TimeSeries(self.grid, self.values[::-1].copy())


@dataclass(frozen=True)
class DuhamelKernel:
    """``rho(t) = singular * t**(alpha-2) / Gamma(alpha-1) + regular(t)``.

    ``singular`` is the exact value g(0) supplied by the caller.
    """

    alpha: float
    singular: float
    regular: TimeSeries


def trapezoid_weights(n: int) -> np.ndarray:
    """Composite trapezoid weights (without the ``dt`` factor) for ``n`` intervals."""
    w = np.ones(n + 1)
    w[0] = w[-1] = 0.5
    return w


def _check_order(gamma: float) -> None:
    if not (np.isfinite(gamma) and gamma > 0):
        raise ValueError(f"integration order must be positive, got {gamma}")


def _dpow(k: np.ndarray, p: float) -> np.ndarray:
    # (k+1)^p - 2 k^p + (k-1)^p for k >= 1 without cancellation
    k = np.asarray(k, dtype=float)
    return k**p * (np.expm1(p * np.log1p(1.0 / k)) + np.expm1(p * np.log1p(-1.0 / k)))


def rl_weights(gamma: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Product-trapezoid weights of ``J^gamma`` on a unit-spaced grid.

    Returns ``(toeplitz, first)``: the value at node ``m`` is
    ``sum_{j=1..m} toeplitz[m-j] f_j + first[m] f_0``, still to be scaled by
    ``dt**gamma / Gamma(gamma + 2)``.
    """
    _check_order(gamma)
    p = gamma + 1.0
    toeplitz = np.empty(n + 1)
    toeplitz[0] = 1.0
    if n >= 1:
        k = np.arange(1, n + 1, dtype=float)
        # the k = 1 term has (k-1)^p = 0, where the log1p form is singular
        toeplitz[1:] = np.where(k == 1.0, 2.0**p - 2.0, _dpow(np.maximum(k, 2.0), p))
    first = np.zeros(n + 1)
    m = np.arange(1, n + 1, dtype=float)
    first[1:] = (m - 1.0) ** p - (m - 1.0 - gamma) * m**gamma
    return toeplitz, first


def _rl_apply(gamma: float, values: np.ndarray, dt: float) -> np.ndarray:
    """Apply J^gamma along the last axis of ``values``."""
    n = values.shape[-1] - 1
    toeplitz, first = rl_weights(gamma, n)
    out = np.zeros_like(values)
    scale = dt**gamma / gamma_fn(gamma + 2.0)
    for m in range(1, n + 1):
        # weights for f_1..f_m are toeplitz[m-1], ..., toeplitz[0]
        out[..., m] = values[..., 1 : m + 1] @ toeplitz[m - 1 :: -1] + first[m] * values[..., 0]
    return out * scale


def rl_integral(gamma: float, f: TimeSeries) -> TimeSeries:
    """Riemann-Liouville integral ``J^gamma f`` by product trapezoid.

    The data are interpolated linearly on each subinterval and the kernel
    moments are integrated exactly, so the result is exact for piecewise-linear
    ``f`` and second order for smooth ``f``.
    """
    _check_order(gamma)
    if not np.all(np.isfinite(f.values)):
        raise ValueError("rl_integral requires finite data")
    return TimeSeries(f.grid, _rl_apply(gamma, f.values, f.grid.dt))


def rl_integral_backward(gamma: float, f: TimeSeries) -> TimeSeries:
    """Backward integral ``J^gamma_{T-} f`` by time reflection of :func:`rl_integral`."""
    return rl_integral(gamma, f.reversed()).reversed()


def derivative(values: np.ndarray, dt: float) -> np.ndarray:
    """Three-point derivative along the last axis, one-sided at both ends."""
    v = np.asarray(values, dtype=float)
    if v.shape[-1] < 3:
        raise ValueError("need at least 3 samples to differentiate")
    d = np.empty_like(v)
    d[..., 1:-1] = (v[..., 2:] - v[..., :-2]) / (2.0 * dt)
    d[..., 0] = (-3.0 * v[..., 0] + 4.0 * v[..., 1] - v[..., 2]) / (2.0 * dt)
    d[..., -1] = (3.0 * v[..., -1] - 4.0 * v[..., -2] + v[..., -3]) / (2.0 * dt)
    return d


def caputo_values(alpha: float, values: np.ndarray, dt: float, a=0.0, b=0.0) -> np.ndarray:
    """Array form of :func:`caputo_shifted`; time runs along the last axis."""
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (1, 2), got {alpha}")
    n = values.shape[-1]
    t = np.arange(n) * dt
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    shifted = values - a - t * b
    return derivative(_rl_apply(2.0 - alpha, derivative(shifted, dt), dt), dt)


def caputo_shifted(alpha: float, u: TimeSeries, a: float, b: float) -> TimeSeries:
    """Caputo derivative as ``d/dt J^{2-alpha} d/dt`` applied to ``u - a - t b``."""
    if u.grid.size < 3:
        raise ValueError("caputo_shifted needs at least 3 nodes")
    tol = max(1e-12, u.grid.dt) * max(1.0, abs(a))
    if abs(u.values[0] - a) > tol:
        raise ValueError(f"u(0)={u.values[0]} is inconsistent with a={a}")
    return TimeSeries(u.grid, caputo_values(alpha, u.values, u.grid.dt, a, b))


def duhamel_kernel(alpha: float, g: TimeSeries, g0: float, g_prime=None) -> DuhamelKernel:
    """Split ``rho`` with ``J^{2-alpha} rho = g`` into singular and regular parts.

    Parameters
    ----------
    g0 : float
        Exact ``g(0)``; it carries the whole singular part.
    g_prime : callable, optional
        Analytic derivative of ``g``; central differences are used otherwise.
    """
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"alpha must lie in (1, 2), got {alpha}")
    if g_prime is not None:
        gp = np.broadcast_to(np.asarray(g_prime(g.grid.nodes), dtype=float), (g.grid.size,))
    else:
        gp = derivative(g.values, g.grid.dt)
    regular = rl_integral(alpha - 1.0, TimeSeries(g.grid, gp.copy()))
    return DuhamelKernel(alpha=alpha, singular=float(g0), regular=regular)


def convolve_trapezoid(kernel: np.ndarray, values: np.ndarray, dt: float) -> np.ndarray:
    """``int_0^{t_m} k(t_m - s) v(s) ds`` by the trapezoid rule on the nodes."""
    n = values.shape[-1]
    out = np.zeros_like(values, dtype=float)
    for m in range(1, n):
        prod = kernel[m::-1] * values[..., : m + 1]
        out[..., m] = dt * (prod.sum(axis=-1) - 0.5 * (prod[..., 0] + prod[..., -1]))
    return out


def convolve_singular(rho: DuhamelKernel, v: TimeSeries) -> TimeSeries:
    """Convolution ``int_0^t rho(t - s) v(s) ds`` of a Duhamel kernel with ``v``.

    The singular part is ``g0 * J^{alpha-1} v``, i.e. exact product integration
    against the piecewise-linear ``v``; the continuous regular part uses the
    trapezoid rule.
    """
    if rho.regular.grid != v.grid:
        raise ValueError("kernel and data live on different time grids")
    return TimeSeries(v.grid, convolve_values(rho, v.values))


def convolve_values(rho: DuhamelKernel, values: np.ndarray) -> np.ndarray:
    """Array form of :func:`convolve_singular`; time runs along the last axis."""
    dt = rho.regular.grid.dt
    sing = rho.singular * _rl_apply(rho.alpha - 1.0, values, dt)
    return sing + convolve_trapezoid(rho.regular.values, values, dt)
