"""Two-parameter Mittag-Leffler function on the real axis.

Three evaluation routes are combined:

* a truncated power series for small ``|z|`` (and for every ``z > 0``),
* the branch-cut integral plus pole residues for the crossover band,
* the algebraic asymptotic expansion plus pole residues for large ``|z|``.

For ``z = -x < 0`` and ``1 < alpha <= 2`` the Hankel representation collapses to

.. math::

    E_{\\alpha,\\beta}(-x) = \\frac{2}{\\alpha}\\Re\\left[s_*^{1-\\beta} e^{s_*}\\right]
        + \\frac{1}{\\pi}\\int_0^\\infty r^{\\alpha-\\beta} e^{-r}
          \\frac{r^\\alpha \\sin(\\beta\\pi) - x\\sin((\\alpha-\\beta)\\pi)}
               {r^{2\\alpha} + 2 x r^\\alpha \\cos(\\alpha\\pi) + x^2}\\,dr,

with ``s_* = x^{1/alpha} exp(i pi / alpha)``. The integral converges at the
origin for ``beta < alpha + 1``; larger ``beta`` is reached through the
recurrence ``E(a, b, z) = (E(a, b - a, z) - 1/Gamma(b - a)) / z``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import gamma, rgamma, roots_jacobi, roots_legendre

__all__ = [
    "MittagLefflerError",
    "MlfParams",
    "RelaxationTriple",
    "mittag_leffler",
    "mlf_eval",
    "relaxation_triple",
    "relaxation_table",
]

#: below this modulus the power series is used (cancellation factor stays below ~e^2)
SERIES_RADIUS = 2.0
#: asymptotic expansion is used once x**(1/alpha) exceeds this (truncation error ~ exp(-45))
ASYMPTOTIC_R0 = 45.0
MAX_SERIES_TERMS = 300

_PANEL_RATIO = 1.5
_PANEL_NODES = 24
_JACOBI_NODES = 24
_R_FIRST = 1e-8
_R_LAST = 64.0


class MittagLefflerError(ArithmeticError):
    """Raised when no evaluation route produced a finite value."""


@dataclass(frozen=True)
class MlfParams:
    alpha: float
    beta: float

    def __post_init__(self) -> None:
        if not np.isfinite(self.alpha) or not 0.0 < self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in (0, 2], got {self.alpha}")
        if not np.isfinite(self.beta):
            raise ValueError(f"beta must be finite, got {self.beta}")


@dataclass(frozen=True)
class RelaxationTriple:
    """Kernel factors of one eigenmode at one time."""

    e1: float
    e2t: float
    kern: float


def _series(z: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    acc = np.zeros(z.shape, dtype=np.longdouble)
    zl = z.astype(np.longdouble)
    power = np.ones_like(zl)
    done = np.zeros(z.shape, dtype=bool)
    prev_small = np.zeros(z.shape, dtype=bool)
    for k in range(MAX_SERIES_TERMS):
        term = power * rgamma(alpha * k + beta)
        acc += np.where(done, 0.0, term)
        # two consecutive negligible terms; a single one may sit next to a pole of Gamma
        small = np.abs(term) < 1e-17 * np.abs(acc)
        done |= small & prev_small & (k > 2)
        prev_small = small
        if done.all():
            break
        power = power * zl
    return acc.astype(float)


def _residues(x: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    # the two poles x**(1/alpha) exp(+-i pi/alpha) lie in the principal sheet only for alpha > 1
    if alpha <= 1.0:
        return np.zeros_like(x)
    r0 = x ** (1.0 / alpha)
    theta = np.pi / alpha
    amp = x ** ((1.0 - beta) / alpha) * np.exp(r0 * np.cos(theta))
    return (2.0 / alpha) * amp * np.cos(r0 * np.sin(theta) + (1.0 - beta) * theta)


def _asymptotic(x: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    z = -x
    r0 = x ** (1.0 / alpha)
    # optimal truncation index, per element
    kcut = np.clip(np.floor(r0 / alpha), 1, 200)
    kmax = int(kcut.max())
    acc = np.zeros_like(x)
    zinv = 1.0 / z
    power = np.ones_like(x)
    for k in range(1, kmax + 1):
        power = power * zinv
        with np.errstate(invalid="ignore", over="ignore"):
            term = power * rgamma(beta - alpha * k)
        # no early exit: terms near poles of Gamma are spuriously tiny
        acc += np.where((k <= kcut) & (power != 0), term, 0.0)
    return _residues(x, alpha, beta) - acc


@lru_cache(maxsize=32)
def _panel_rule(alpha_minus_beta: float) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on (0, R] for the weight r**(alpha-beta).

    One Gauss-Jacobi panel absorbs the endpoint singularity on (0, r_first];
    geometric Gauss-Legendre panels (ratio 1.5) cover the rest up to R = 64,
    beyond which exp(-r) is below double precision.
    """
    a = alpha_minus_beta
    xj, wj = roots_jacobi(_JACOBI_NODES, 0.0, a)
    # Jacobi weights are divided by r**a so every panel takes the same integrand
    # int_0^eps r^a f(r) dr = eps^(a+1) 2^(-a-1) int (1+x)^a f(eps (1+x)/2) dx
    nodes = [_R_FIRST * (1.0 + xj) / 2.0]
    weights = [wj * _R_FIRST ** (a + 1.0) * 2.0 ** (-a - 1.0) / nodes[0] ** a]
    xg, wg = roots_legendre(_PANEL_NODES)
    lo = _R_FIRST
    while lo < _R_LAST:
        hi = min(lo * _PANEL_RATIO, _R_LAST)
        mid, half = (hi + lo) / 2.0, (hi - lo) / 2.0
        nodes.append(mid + half * xg)
        weights.append(half * wg)
        lo = hi
    return np.concatenate(nodes), np.concatenate(weights)


def _branch_cut(x: np.ndarray, alpha: float, beta: float) -> np.ndarray:
    r, w = _panel_rule(alpha - beta)
    ra = r ** alpha
    pw = r ** (alpha - beta) * np.exp(-r) * w
    s_b = np.sin(beta * np.pi)
    s_ab = np.sin((alpha - beta) * np.pi)
    c_a = np.cos(alpha * np.pi)
    out = np.empty_like(x)
    chunk = max(1, 2_000_000 // r.size)
    for i in range(0, x.size, chunk):
        xx = x[i : i + chunk, None]
        num = ra * s_b - xx * s_ab
        den = ra * ra + 2.0 * xx * ra * c_a + xx * xx
        out[i : i + chunk] = (pw * num / den).sum(axis=1) / np.pi
    return out + _residues(x, alpha, beta)


def _negative_band(x: np.ndarray, alpha: float, beta: float, method: str) -> np.ndarray:
    """E(alpha, beta, -x) for x > SERIES_RADIUS by integral or asymptotics."""
    if beta >= alpha + 1.0:
        # downward recurrence; no cancellation since |z| > SERIES_RADIUS
        lower = _negative_band(x, alpha, beta - alpha, method)
        return (lower - rgamma(beta - alpha)) / (-x)
    if method == "integral":
        return _branch_cut(x, alpha, beta)
    if method == "asymptotic":
        return _asymptotic(x, alpha, beta)
    out = np.empty_like(x)
    big = x ** (1.0 / alpha) >= ASYMPTOTIC_R0
    if big.any():
        out[big] = _asymptotic(x[big], alpha, beta)
    if (~big).any():
        out[~big] = _branch_cut(x[~big], alpha, beta)
    return out


def _alpha_one(z: np.ndarray, beta: float) -> np.ndarray:
    if beta == 1.0:
        return np.exp(z)
    if beta == 2.0:
        return np.where(z == 0, 1.0, np.expm1(z) / np.where(z == 0, 1.0, z))
    raise ValueError("alpha = 1 is supported for beta in {1, 2} only")


def mittag_leffler(z, alpha: float, beta: float = 1.0, method: str = "auto") -> np.ndarray:
    """Evaluate ``E_{alpha,beta}(z)`` elementwise for real ``z``.

    Parameters
    ----------
    z : array_like
        Real arguments. Values ``z <= 0`` are certified; ``z > 0`` is summed
        by the power series on a best-effort basis.
    alpha, beta : float
        Parameters with ``0 < alpha <= 2``.
    method : {"auto", "series", "integral", "asymptotic"}
        Force a single route for ``z < -SERIES_RADIUS``; used to cross-check.

    Raises
    ------
    MittagLefflerError
        If a result is not finite.
    """
    MlfParams(alpha, beta)
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("mittag_leffler requires finite arguments")
    if method not in ("auto", "series", "integral", "asymptotic"):
        raise ValueError(f"unknown method {method!r}")
    flat = z.ravel()
    out = np.empty_like(flat)
    if alpha == 1.0:
        out[:] = _alpha_one(flat, beta)
    else:
        if method == "series":
            near = np.ones(flat.shape, dtype=bool)
        else:
            near = (flat > 0) | (np.abs(flat) <= SERIES_RADIUS)
        if near.any():
            out[near] = _series(flat[near], alpha, beta)
        far = ~near
        if far.any():
            out[far] = _negative_band(-flat[far], alpha, beta, method)
    if not np.all(np.isfinite(out)):
        bad = flat[~np.isfinite(out)]
        raise MittagLefflerError(
            f"E_{{{alpha},{beta}}} not finite at z={bad[:3]} "
            f"(attempted: series, branch-cut integral, asymptotic expansion)"
        )
    return out.reshape(z.shape)


def mlf_eval(params: MlfParams, z: float) -> float:
    """Scalar convenience wrapper around :func:`mittag_leffler`."""
    return float(mittag_leffler(z, params.alpha, params.beta))


def _tpow(t: np.ndarray, p: float) -> np.ndarray:
    # t**p with 0**p := 0 for p > 0
    t = np.asarray(t, dtype=float)
    return np.where(t > 0, np.abs(t) ** p, 0.0) if p > 0 else t**p


def relaxation_table(alpha: float, lam, t) -> dict[str, np.ndarray]:
    """Tabulate the kernel factors on the outer product ``lam x t``.

    Returns arrays of shape ``(len(lam), len(t))`` with keys

    ``e1``   E_{a,1}(-lam t^a)
    ``e2t``  t E_{a,2}(-lam t^a)
    ``kern`` t^(a-1) E_{a,a}(-lam t^a)
    ``g1``   t^a E_{a,a+1}(-lam t^a), the antiderivative of ``kern``
    ``g2``   t^(a+1) E_{a,a+2}(-lam t^a), the antiderivative of ``g1``
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(lam < 0) or np.any(t < 0):
        raise ValueError("relaxation factors need lam >= 0 and t >= 0")
    ta = _tpow(t, alpha)
    z = -lam[:, None] * ta[None, :]
    return {
        "e1": mittag_leffler(z, alpha, 1.0),
        "e2t": t[None, :] * mittag_leffler(z, alpha, 2.0),
        "kern": _tpow(t, alpha - 1.0)[None, :] * mittag_leffler(z, alpha, alpha),
        "g1": ta[None, :] * mittag_leffler(z, alpha, alpha + 1.0),
        "g2": _tpow(t, alpha + 1.0)[None, :] * mittag_leffler(z, alpha, alpha + 2.0),
    }


def relaxation_triple(alpha: float, lam: float, t: float) -> RelaxationTriple:
    if not 1.0 < alpha < 2.0:
        raise ValueError(f"relaxation_triple needs alpha in (1, 2), got {alpha}")
    if not (np.isfinite(lam) and np.isfinite(t)):
        raise ValueError("relaxation_triple needs finite inputs")
    tab = relaxation_table(alpha, [lam], [t])
    return RelaxationTriple(
        e1=float(tab["e1"][0, 0]), e2t=float(tab["e2t"][0, 0]), kern=float(tab["kern"][0, 0])
    )


def gamma_cache(alpha: float) -> dict[str, float]:
    """Gamma values of the exponents derived from ``alpha`` that recur in the solvers."""
    return {
        "2-a": float(gamma(2.0 - alpha)),
        "a-1": float(gamma(alpha - 1.0)),
        "a": float(gamma(alpha)),
        "a/2": float(gamma(alpha / 2.0)),
    }
