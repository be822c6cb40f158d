"""Recovery of the spatial source factor ``f`` from boundary flux data.

With zero initial data and source ``f(x) g(t)`` the flux trace depends
linearly on ``f``: ``d = K f``. Source space carries the h-weighted inner
product, data space the trapezoid-in-time product summed over sides. The
adjoint ``K*`` is the exact transpose of the discrete forward sweep, obtained
by running the same Volterra recursion backward in time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .forward import FluxTrace, ProblemSpec, SourceSpec, flux_matrix, march, measure_flux, solve_general
from .fracops import TimeSeries, _rl_apply, derivative, trapezoid_weights
from .spatial import MeshField

logger = logging.getLogger(__name__)

__all__ = [
    "ForwardMap",
    "ReconstructionReport",
    "StabilityRow",
    "assemble_forward_map",
    "apply_adjoint_map",
    "reconstruct",
    "deconvolve_flux",
    "stability_experiment",
    "add_noise",
    "discrepancy_sweep",
    "lcurve_corner",
]


@dataclass
class ForwardMap:
    """Linear map ``f -> flux trace`` for a fixed template problem.

    ``matrix`` (dense mode) has shape ``(n_sides * n_t, n_interior)`` and acts
    on raw interior values; ``scaled_matrix`` folds in both inner products so
    that Euclidean geometry matches the continuum one.
    """

    spec: ProblemSpec
    g: TimeSeries
    g0: float
    matrix: np.ndarray | None = None
    _source_conv: np.ndarray | None = field(default=None, repr=False)

    @property
    def sides(self) -> tuple[str, ...]:
        return tuple(self.spec.sides)

    @property
    def data_shape(self) -> tuple[int, int]:
        return (len(self.sides), self.spec.grid.size)

    @property
    def data_weights(self) -> np.ndarray:
        """Quadrature weight of every data entry, shape ``data_shape``."""
        grid = self.spec.grid
        w = trapezoid_weights(grid.n_steps) * grid.dt
        return np.broadcast_to(w, self.data_shape)

    @property
    def scaled_matrix(self) -> np.ndarray:
        if self.matrix is None:
            raise ValueError("forward map was assembled without a dense matrix")
        sw = np.sqrt(self.data_weights.ravel())
        return sw[:, None] * self.matrix / np.sqrt(self.spec.mesh.h)

    def _conv(self) -> np.ndarray:
        if self._source_conv is None:
            self._source_conv = self.spec.weights.convolve(
                np.outer(np.ones(self.spec.basis.size), self.g.values)
            )
        return self._source_conv

    def _flux_rows(self) -> np.ndarray:
        return flux_matrix(self.spec.mesh, self.spec.coeff, self.sides) @ self.spec.basis.phis

    def apply(self, f: MeshField | np.ndarray) -> FluxTrace:
        """``K f`` by one forward sweep (or the dense matrix when assembled)."""
        fv = f.values if isinstance(f, MeshField) else np.asarray(f, dtype=float)
        grid = self.spec.grid
        if self.matrix is not None:
            return FluxTrace(grid, self.sides, (self.matrix @ fv).reshape(self.data_shape))
        free = self.spec.basis.project(fv)[:, None] * self._conv()
        y = march(self.spec.weights, self.spec.modal_first_order, free)
        return FluxTrace(grid, self.sides, self._flux_rows() @ y)

    def adjoint(self, data: FluxTrace | np.ndarray) -> MeshField:
        return apply_adjoint_map(self, data)


def assemble_forward_map(template: ProblemSpec, g: TimeSeries, g0: float | None = None,
                         dense: bool = True) -> ForwardMap:
    """Build ``K`` for the template's coefficients, grids and observed sides.

    Dense mode runs one batched sweep with every interior hat function as
    ``f`` and stores the raw flux responses column by column.
    """
    for name in ("a", "b"):
        v = getattr(template, name)
        if v is not None and np.any(v.values):
            raise ValueError("forward map template must have zero initial data")
    if g.grid != template.grid:
        raise ValueError("time profile lives on a different grid")
    spec = template.with_(a=None, b=None, source=None, F=None)
    g0 = float(g.values[0]) if g0 is None else float(g0)
    fmap = ForwardMap(spec=spec, g=g, g0=g0)
    if dense:
        basis = spec.basis
        # modal coefficients of the unit hats: h * phi_n(x_j)
        hats = spec.mesh.h * basis.phis.T
        free = hats[:, :, None] * fmap._conv()[:, None, :]
        y = march(spec.weights, spec.modal_first_order, free)
        resp = np.einsum("sn,njt->stj", fmap._flux_rows(), y)
        fmap.matrix = resp.reshape(-1, spec.mesh.n_interior)
    return fmap


def _adjoint_march(weights, Phat: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Transpose of :func:`forward.march`: solve ``q = W^T (r - Phat^T q)``.

    Runs from the last node backward; ``r`` and the result have shape
    ``(n_modes, n_t)``.
    """
    n, n_t = r.shape
    c = weights.toeplitz
    R = weights.R
    PT = Phat.T
    q = np.zeros_like(r)
    s = np.zeros_like(r)
    lu = sla.lu_factor(np.eye(n) + weights.L[:, :1] * PT)
    for j in range(n_t - 1, 0, -1):
        later = np.einsum("nm,nm->n", c[:, 1 : n_t - j], s[:, j + 1 :]) if j < n_t - 1 else 0.0
        q[:, j] = sla.lu_solve(lu, weights.L[:, 0] * r[:, j] + later)
        s[:, j] = r[:, j] - PT @ q[:, j]
    q[:, 0] = np.einsum("nm,nm->n", R[:, : n_t - 1], s[:, 1:])
    return q


def apply_adjoint_map(fmap: ForwardMap, data: FluxTrace | np.ndarray) -> MeshField:
    """``K* psi`` with ``<K f, psi>_data = <f, K* psi>_h`` holding to round-off."""
    vals = data.values if isinstance(data, FluxTrace) else np.asarray(data, dtype=float)
    if vals.shape != fmap.data_shape:
        raise ValueError(f"data shape {vals.shape} does not match {fmap.data_shape}")
    spec = fmap.spec
    weighted = vals * fmap.data_weights
    r = fmap._flux_rows().T @ weighted
    q = _adjoint_march(spec.weights, spec.modal_first_order, r)
    return MeshField(spec.mesh, spec.basis.synthesize(q @ fmap.g.values))


@dataclass
class ReconstructionReport:
    f_hat: MeshField
    lambda_reg: float
    method: str
    iterations: int
    residual: float
    solution_norm: float
    rel_error: float | None = None
    residual_history: list[float] = field(default_factory=list)
    objective_history: list[float] = field(default_factory=list)
    rank_deficient: bool = False


def _svd_solve(fmap: ForwardMap, d: np.ndarray, lam: float, rcond: float = 1e-13):
    Ks = fmap.scaled_matrix
    b = np.sqrt(fmap.data_weights.ravel()) * d.ravel()
    U, sig, Vt = np.linalg.svd(Ks, full_matrices=False)
    beta = U.T @ b
    keep = sig > rcond * sig[0]
    deficient = bool(lam == 0 and not keep.all())
    if deficient:
        logger.warning("normal matrix is singular at lambda_reg=0; using spectral cutoff (rank %d of %d)",
                       keep.sum(), sig.size)
    filt = np.where(keep, sig / (sig**2 + lam), 0.0)
    xi = Vt.T @ (filt * beta)
    return xi / np.sqrt(fmap.spec.mesh.h), deficient


def reconstruct(fmap: ForwardMap, data: FluxTrace | np.ndarray, lambda_reg: float,
                method: str = "normal-equations", max_iters: int = 200, tol: float = 1e-10,
                truth: MeshField | None = None) -> ReconstructionReport:
    """Minimise ``||K f - d||^2_data + lambda_reg ||f||^2_h``.

    ``normal-equations`` solves the regularized normal equations through the
    SVD of the scaled dense matrix (spectral cutoff when ``lambda_reg = 0`` and
    the matrix is rank deficient). ``cgls`` is matrix-free; its iteration cap
    acts as a second regularizer.
    """
    if lambda_reg < 0:
        raise ValueError("lambda_reg must be nonnegative")
    d = data.values if isinstance(data, FluxTrace) else np.asarray(data, dtype=float)
    if d.shape != fmap.data_shape:
        raise ValueError(f"data shape {d.shape} does not match {fmap.data_shape}")
    mesh = fmap.spec.mesh
    data_tr = FluxTrace(fmap.spec.grid, fmap.sides, d)
    res_hist: list[float] = []
    obj_hist: list[float] = []
    deficient = False
    if method == "normal-equations":
        if fmap.matrix is None:
            raise ValueError("normal-equations mode needs a dense forward map")
        fv, deficient = _svd_solve(fmap, d, lambda_reg)
        iters = 1
    elif method == "cgls":
        fv, iters, res_hist, obj_hist = _cgls(fmap, data_tr, lambda_reg, max_iters, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    f_hat = MeshField(mesh, fv)
    r = fmap.apply(f_hat)
    resid = FluxTrace(r.grid, r.sides, r.values - d).norm()
    rel = None
    if truth is not None:
        tn = truth.norm()
        rel = MeshField(mesh, fv - truth.values).norm() / tn if tn > 0 else None
    return ReconstructionReport(f_hat=f_hat, lambda_reg=lambda_reg, method=method, iterations=iters,
                                residual=resid, solution_norm=f_hat.norm(), rel_error=rel,
                                residual_history=res_hist, objective_history=obj_hist,
                                rank_deficient=deficient)


def _cgls(fmap: ForwardMap, data: FluxTrace, lam: float, max_iters: int, tol: float):
    mesh = fmap.spec.mesh
    h = mesh.h
    x = np.zeros(mesh.n_interior)
    r = data.values.copy()
    w = fmap.data_weights

    def dnorm2(v):
        return float(np.sum(w * v * v))

    s = apply_adjoint_map(fmap, r).values
    p = s.copy()
    gam = h * float(s @ s)
    gam0 = gam
    res_hist = [np.sqrt(dnorm2(r))]
    obj_hist = [dnorm2(r)]
    it = 0
    while it < max_iters and gam > (tol**2) * gam0 and gam > 0:
        q = fmap.apply(p).values
        delta = dnorm2(q) + lam * h * float(p @ p)
        step = gam / delta
        x += step * p
        r -= step * q
        s = apply_adjoint_map(fmap, r).values - lam * x
        gam_new = h * float(s @ s)
        p = s + (gam_new / gam) * p
        gam = gam_new
        it += 1
        res_hist.append(np.sqrt(dnorm2(r)))
        obj_hist.append(dnorm2(r) + lam * h * float(x @ x))
    return x, it, res_hist, obj_hist


def add_noise(trace: FluxTrace, level: float, rng: np.random.Generator) -> FluxTrace:
    """Additive Gaussian noise whose data norm is ``level`` times that of ``trace``."""
    noise = rng.standard_normal(trace.values.shape)
    noise_tr = FluxTrace(trace.grid, trace.sides, noise)
    scale = level * trace.norm() / noise_tr.norm() if noise_tr.norm() > 0 else 0.0
    return FluxTrace(trace.grid, trace.sides, trace.values + scale * noise)


def discrepancy_sweep(fmap: ForwardMap, data: FluxTrace, lambdas, noise_norm: float | None = None,
                      truth: MeshField | None = None, tau: float = 1.0):
    """Reconstruct for every ``lambda`` and pick the largest whose residual is within ``tau * noise_norm``.

    Without a noise level the misfit floor ``min_lambda ||K f_lambda - d||`` is
    used instead; for synthetic noiseless data it measures the model error
    between the data generator and the inversion grid. Returns
    ``(chosen_report, all_reports)`` with reports in the order given.
    """
    reports = [reconstruct(fmap, data, lam, truth=truth) for lam in lambdas]
    level = min(r.residual for r in reports) if noise_norm is None else noise_norm
    ok = [r for r in reports if r.residual <= tau * level]
    if ok:
        chosen = max(ok, key=lambda r: r.lambda_reg)
    else:
        chosen = min(reports, key=lambda r: r.residual)
        logger.warning("no lambda met the discrepancy level %.3e; taking smallest residual", level)
    return chosen, reports


def lcurve_corner(reports: list[ReconstructionReport]) -> ReconstructionReport:
    """Point of maximum curvature of ``(log residual, log ||f||)`` over ``log lambda``.

    ``reports`` must come from a sweep over increasing, log-spaced ``lambda``.
    """
    if len(reports) < 3:
        raise ValueError("the L-curve needs at least three points")
    lam = np.log([r.lambda_reg for r in reports])
    rho = np.log([max(r.residual, 1e-300) for r in reports])
    eta = np.log([max(r.solution_norm, 1e-300) for r in reports])
    d_rho, d_eta = np.gradient(rho, lam), np.gradient(eta, lam)
    dd_rho, dd_eta = np.gradient(d_rho, lam), np.gradient(d_eta, lam)
    kappa = (d_rho * dd_eta - dd_rho * d_eta) / np.maximum((d_rho**2 + d_eta**2) ** 1.5, 1e-300)
    # the end points only have one-sided differences
    kappa[0] = kappa[-1] = -np.inf
    return reports[int(np.argmax(kappa))]


def deconvolve_flux(flux_u: FluxTrace, g: TimeSeries, g0: float, alpha: float,
                    g_prime=None) -> FluxTrace:
    """Recover the flux of the velocity-driven problem from the source-driven flux.

    ``psi = d/dt J^{2-alpha} flux_u`` satisfies
    ``g(0) w(t) + int_0^t g'(t - s) w(s) ds = psi(t)``, which is marched with
    the trapezoid rule.
    """
    if abs(g0) < 1e-12:
        raise ValueError("deconvolution needs |g(0)| >= 1e-12")
    if g.grid != flux_u.grid:
        raise ValueError("flux and time profile live on different grids")
    grid = flux_u.grid
    dt = grid.dt
    psi = derivative(_rl_apply(2.0 - alpha, flux_u.values, dt), dt)
    if g_prime is not None:
        gp = np.broadcast_to(np.asarray(g_prime(grid.nodes), dtype=float), (grid.size,))
    else:
        gp = derivative(g.values, dt)
    w = np.zeros_like(psi)
    w[:, 0] = psi[:, 0] / g0
    diag = g0 + 0.5 * dt * gp[0]
    for m in range(1, grid.size):
        hist = 0.5 * gp[m] * w[:, 0]
        if m > 1:
            hist = hist + w[:, 1:m] @ gp[m - 1 : 0 : -1]
        w[:, m] = (psi[:, m] - dt * hist) / diag
    return FluxTrace(grid, flux_u.sides, w)


@dataclass
class StabilityRow:
    b_norm: float
    data_norm: float
    ratio: float


def stability_experiment(fmap: ForwardMap, f_pairs, g: TimeSeries | None = None) -> list[StabilityRow]:
    """Compare ``||f1 - f2||_B`` with ``||K f1 - K f2||_data`` pair by pair.

    The norm side solves the forward problem once for ``f1 - f2``; the data
    side applies the map to each member separately.
    """
    g = fmap.g if g is None else g
    spec = fmap.spec
    rows = []
    for f1, f2 in f_pairs:
        diff = MeshField(spec.mesh, f1.values - f2.values)
        if np.any(diff.values):
            u = solve_general(spec.with_(source=SourceSpec(diff, g, fmap.g0)))
            bn = measure_flux(u, spec.coeff, fmap.sides).norm()
        else:
            bn = 0.0
        d1, d2 = fmap.apply(f1), fmap.apply(f2)
        dn = FluxTrace(d1.grid, d1.sides, d1.values - d2.values).norm()
        rows.append(StabilityRow(b_norm=bn, data_norm=dn, ratio=bn / dn if dn > 0 else 1.0))
    return rows
