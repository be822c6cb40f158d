import numpy as np
import pytest
from scipy.special import gamma

from fdwave.forward import (
    FluxTrace,
    ModalWeights,
    NumericalInstabilityError,
    ProblemSpec,
    SourceSpec,
    duhamel_solve,
    growth_sanity,
    measure_flux,
    picard_iterate,
    solve_general,
    solve_symmetric,
)
from fdwave.fracops import TimeGrid, TimeSeries
from fdwave.mlf import mittag_leffler
from fdwave.spatial import Coefficients, MeshField, SpatialMesh

from conftest import nonsymmetric_coefficients, space_time_rel

ALPHA = 1.5


def _mode_case(kind, n=63, nt=256, alpha=ALPHA, mode=2):
    mesh, grid = SpatialMesh(0.0, 1.0, n), TimeGrid(1.0, nt)
    coeff = Coefficients.constant(1.0)
    spec = ProblemSpec(alpha, mesh, coeff, grid)
    phi = spec.basis.mode(mode)
    lam = spec.basis.lambdas[mode - 1]
    t = grid.nodes
    if kind == "position":
        spec = spec.with_(a=phi)
        profile = mittag_leffler(-lam * t**alpha, alpha, 1.0)
    elif kind == "velocity":
        spec = spec.with_(b=phi)
        profile = t * mittag_leffler(-lam * t**alpha, alpha, 2.0)
    else:
        g = TimeSeries.from_function(grid, lambda s: np.ones_like(s))
        spec = spec.with_(source=SourceSpec(phi, g, 1.0))
        profile = t**alpha * mittag_leffler(-lam * t**alpha, alpha, alpha + 1.0)
    return spec, np.outer(phi.values, profile)


@pytest.mark.parametrize("kind", ["position", "velocity", "source"])
@pytest.mark.parametrize("solver", [solve_general, solve_symmetric])
def test_single_mode_closed_forms(kind, solver):
    spec, exact = _mode_case(kind)
    assert space_time_rel(solver(spec).interior, exact) < 1e-4


@pytest.mark.parametrize("alpha", [1.1, 1.9])
def test_single_mode_other_orders(alpha):
    spec, exact = _mode_case("source", n=31, nt=128, alpha=alpha, mode=1)
    assert space_time_rel(solve_general(spec).interior, exact) < 1e-4


def test_weights_reproduce_unit_source():
    # the rows of the weight matrix integrate k_n exactly against constants
    grid = TimeGrid(1.0, 64)
    lam = np.array([1.0, 30.0])
    w = ModalWeights.build(ALPHA, lam, grid)
    conv = w.convolve(np.ones((2, grid.size)))
    t = grid.nodes
    exact = t**ALPHA * mittag_leffler(-np.outer(lam, t**ALPHA), ALPHA, ALPHA + 1.0)
    assert np.allclose(conv, exact, atol=1e-12)


def _manufactured(n, nt):
    mesh, grid = SpatialMesh(0.0, 1.0, n), TimeGrid(1.0, nt)
    x, t = mesh.nodes, grid.nodes
    X, Xp = np.sin(np.pi * x), np.pi * np.cos(np.pi * x)
    a, ap, B, c = 1 + 0.5 * x, 0.5, 0.3 + 0.1 * x, 0.2
    AX = -(ap * Xp - a * np.pi**2 * X) + B * Xp + c * X
    F = np.outer(X, 2 * t ** (2 - ALPHA) / gamma(3 - ALPHA)) + np.outer(AX, t**2)
    spec = ProblemSpec(ALPHA, mesh, nonsymmetric_coefficients(), grid, F=F)
    u = solve_general(spec).interior
    return np.sqrt(mesh.h * grid.dt * np.sum((u - np.outer(X, t**2)) ** 2))


def test_manufactured_solution_converges():
    errs = [_manufactured(n, nt) for n, nt in ((15, 32), (31, 64), (63, 128))]
    factors = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(factors >= 1.7)


def test_symmetric_solver_rejects_advection(mesh31, grid64):
    spec = ProblemSpec(ALPHA, mesh31, nonsymmetric_coefficients(), grid64)
    with pytest.raises(ValueError):
        solve_symmetric(spec)


def test_linearity_in_data(mesh31, grid64):
    coeff = nonsymmetric_coefficients()
    a = MeshField.from_function(mesh31, lambda x: x * (1 - x))
    b = MeshField.from_function(mesh31, lambda x: np.sin(3 * x) * x * (1 - x))
    ua = solve_general(ProblemSpec(ALPHA, mesh31, coeff, grid64, a=a)).values
    ub = solve_general(ProblemSpec(ALPHA, mesh31, coeff, grid64, b=b)).values
    uab = solve_general(ProblemSpec(ALPHA, mesh31, coeff, grid64, a=a, b=b)).values
    assert np.allclose(ua + ub, uab, atol=1e-13)


def test_initial_values_and_boundaries(mesh31, grid64):
    a = MeshField.from_function(mesh31, lambda x: np.sin(np.pi * x))
    u = solve_general(ProblemSpec(ALPHA, mesh31, nonsymmetric_coefficients(), grid64, a=a))
    assert np.allclose(u.interior[:, 0], a.values, atol=1e-14)
    assert np.all(u.values[0] == 0) and np.all(u.values[-1] == 0)
    assert np.allclose(u.snapshot(0).values, a.values)
    assert np.array_equal(u.reversed().values[:, 0], u.values[:, -1])


def test_mode_truncation_converges(mesh31, grid64):
    b = MeshField.from_function(mesh31, lambda x: x * (1 - x))
    spec = ProblemSpec(ALPHA, mesh31, Coefficients.constant(1.0), grid64, b=b)
    full = solve_symmetric(spec).interior
    errs = [space_time_rel(solve_symmetric(spec.with_(n_modes=k)).interior, full) for k in (3, 9, 27)]
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-3


def test_spec_validation(mesh31, grid64):
    with pytest.raises(ValueError):
        ProblemSpec(2.0, mesh31, Coefficients.constant(), grid64)
    with pytest.raises(ValueError):
        ProblemSpec(ALPHA, mesh31, Coefficients.constant(), grid64, F=np.zeros((31, 10)))
    with pytest.raises(ValueError):
        ProblemSpec(ALPHA, mesh31, Coefficients.constant(), grid64, sides=("top",))
    with pytest.raises(ValueError):
        ProblemSpec(ALPHA, mesh31, Coefficients.constant(), grid64, n_modes=40)
    other = TimeSeries.from_function(TimeGrid(1.0, 32), np.cos)
    with pytest.raises(ValueError):
        ProblemSpec(ALPHA, mesh31, Coefficients.constant(), grid64,
                    source=SourceSpec(MeshField(mesh31, np.ones(31)), other, 1.0))


def test_with_reuses_cached_basis(mesh31, grid64):
    spec = ProblemSpec(ALPHA, mesh31, nonsymmetric_coefficients(), grid64)
    basis = spec.basis
    assert spec.with_(b=MeshField(mesh31, np.ones(31))).basis is basis
    assert spec.with_(grid=TimeGrid(2.0, 64)).basis is not basis


def test_blowup_is_reported():
    mesh = SpatialMesh(0.0, 1.0, 15)
    spec = ProblemSpec(ALPHA, mesh, Coefficients.constant(1.0, 0.0, -400.0), TimeGrid(5.0, 200),
                       b=MeshField.from_function(mesh, lambda x: np.sin(np.pi * x)))
    with pytest.raises(NumericalInstabilityError, match="exceeds"):
        solve_general(spec)


def _picard_spec(coeff):
    mesh = SpatialMesh(0.0, 1.0, 31)
    return ProblemSpec(ALPHA, mesh, coeff, TimeGrid(1.0, 128),
                       b=MeshField.from_function(mesh, lambda x: np.sin(np.pi * x)))


@pytest.mark.parametrize("coeff", [
    Coefficients(a=lambda x: 1 + 0.5 * x, B=lambda x: 0.3 + 0.1 * x, c=lambda x: 3 + x, a0=1.0),
    Coefficients(a=lambda x: 1 + 0.5 * x, B=lambda x: 0 * x, c=lambda x: 3 + x, a0=1.0),
])
def test_picard_matches_march_and_decays_super_geometrically(coeff):
    spec = _picard_spec(coeff)
    rep = picard_iterate(spec, tol=1e-10)
    assert rep.converged
    assert np.max(np.abs(rep.field.values - solve_general(spec).values)) <= 1e-8
    r = rep.ratios()
    # ratios[k] = delta_{k+2} / delta_{k+1}; strictly decreasing from iteration 4 on
    assert np.all(np.diff(r[1:]) < 0)


def test_picard_with_weak_zeroth_order_term():
    spec = _picard_spec(nonsymmetric_coefficients())
    rep = picard_iterate(spec, tol=1e-10)
    assert rep.converged
    assert np.max(np.abs(rep.field.values - solve_general(spec).values)) <= 1e-8
    # advection-dominated: single ratios wobble, two-step contraction still shrinks
    two = np.asarray(rep.deltas)
    two = two[2:] / two[:-2]
    assert np.all(two < 0.01)


def test_picard_symmetric_is_one_step(mesh31, grid64):
    spec = ProblemSpec(ALPHA, mesh31, Coefficients.constant(), grid64,
                       a=MeshField.from_function(mesh31, lambda x: np.sin(np.pi * x)))
    rep = picard_iterate(spec)
    assert rep.iterations == 2 and rep.deltas[-1] == 0.0


@pytest.mark.parametrize("g_fn, g0, g_prime", [
    (lambda t: np.ones_like(t), 1.0, lambda t: np.zeros_like(t)),
    (lambda t: 1.0 + t, 1.0, lambda t: np.ones_like(t)),
    (lambda t: 2.0 + np.sin(t), 2.0, np.cos),
])
@pytest.mark.parametrize("symmetric", [True, False])
def test_duhamel_matches_march(g_fn, g0, g_prime, symmetric):
    mesh, grid = SpatialMesh(0.0, 1.0, 31), TimeGrid(1.0, 128)
    coeff = Coefficients.constant() if symmetric else nonsymmetric_coefficients()
    f = MeshField.from_function(mesh, lambda x: np.sin(np.pi * x) + x * (1 - x))
    g = TimeSeries.from_function(grid, g_fn)
    spec = ProblemSpec(ALPHA, mesh, coeff, grid, source=SourceSpec(f, g, g0, g_prime))
    assert space_time_rel(duhamel_solve(spec).interior, solve_general(spec).interior) < 1e-3


def test_duhamel_validation(mesh31, grid64):
    spec = ProblemSpec(ALPHA, mesh31, Coefficients.constant(), grid64)
    with pytest.raises(ValueError):
        duhamel_solve(spec)
    g = TimeSeries.from_function(grid64, lambda t: 1 + t)
    spec = spec.with_(a=MeshField(mesh31, np.ones(31)), source=SourceSpec(MeshField(mesh31, np.ones(31)), g, 1.0))
    with pytest.raises(ValueError):
        duhamel_solve(spec)


def test_flux_trace_and_norm(mesh31, grid64):
    spec, _ = _mode_case("velocity", n=31, nt=64, mode=1)
    u = solve_general(spec)
    tr = measure_flux(u, spec.coeff, ("left", "right"))
    assert tr.values.shape == (2, 65)
    # the first mode is symmetric about x = 1/2, so both outward fluxes agree
    assert np.allclose(tr.side("left").values, tr.side("right").values, atol=1e-10)
    assert tr.norm() == pytest.approx(np.sqrt(tr.inner(tr)))
    assert FluxTrace(grid64, ("right",), np.ones((1, 65))).norm() == pytest.approx(1.0)


def test_growth_sanity_damped_and_anti_damped():
    mesh = SpatialMesh(0.0, 1.0, 31)
    b = MeshField.from_function(mesh, lambda x: np.sin(np.pi * x))
    spec = ProblemSpec(ALPHA, mesh, Coefficients.constant(1.0, 0.3, -0.2), TimeGrid(1.0, 64), b=b)
    assert growth_sanity(spec, T_long=10.0).passed
    spec = spec.with_(coeff=Coefficients.constant(1.0, 0.0, -20.0))
    rep = growth_sanity(spec, T_long=2.0)
    assert rep.passed and rep.kappa > 0
    with pytest.raises(ValueError):
        growth_sanity(spec.with_(source=SourceSpec(b, TimeSeries.from_function(spec.grid, np.cos), 1.0)), 2.0)


def test_constant_source_mittag_leffler_identity():
    # t^a E_{a,a+1}(-lam t^a) = (1 - E_{a,1}(-lam t^a)) / lam
    spec, exact = _mode_case("source", n=31, nt=128, mode=1)
    lam = spec.basis.lambdas[0]
    t = spec.grid.nodes
    other = np.outer(spec.basis.mode(1).values, (1 - mittag_leffler(-lam * t**ALPHA, ALPHA, 1.0)) / lam)
    assert np.allclose(exact, other, atol=1e-12)
    assert space_time_rel(duhamel_solve(spec).interior, other) < 1e-3


def test_general_matches_symmetric_without_advection(mesh31, grid64):
    coeff = Coefficients(a=lambda x: 1 + 0.5 * x, B=lambda x: 0 * x, c=lambda x: 0 * x, a0=1.0)
    f = MeshField.from_function(mesh31, lambda x: x * (1 - x))
    spec = ProblemSpec(ALPHA, mesh31, coeff, grid64, a=f, b=f,
                       source=SourceSpec(f, TimeSeries.from_function(grid64, np.cos), 1.0))
    assert np.max(np.abs(solve_general(spec).values - solve_symmetric(spec).values)) < 1e-12


def test_single_mode_flux_trace():
    spec, exact = _mode_case("position", n=31, nt=64, mode=1)
    tr = measure_flux(solve_general(spec), spec.coeff)
    phi = spec.basis.mode(1).values
    h = spec.mesh.h
    slope = (0.0 - 4 * phi[-1] + phi[-2]) / (2 * h)
    lam = spec.basis.lambdas[0]
    expected = mittag_leffler(-lam * spec.grid.nodes**ALPHA, ALPHA, 1.0) * slope
    assert np.allclose(tr.values[0], expected, atol=1e-10)
    zero = solve_general(spec.with_(a=None))
    assert np.all(measure_flux(zero, spec.coeff).values == 0)


def test_growth_sanity_decaying_mode():
    spec, _ = _mode_case("position", n=31, nt=64, mode=1)
    rep = growth_sanity(spec, T_long=4.0)
    lam = spec.basis.lambdas[0]
    expected = lam * np.abs(mittag_leffler(-lam * rep.times**ALPHA, ALPHA, 1.0))
    assert np.allclose(rep.norms, expected, atol=1e-8)
    assert rep.passed and rep.kappa == 0.0


def _envelope_excess(coeff, init):
    mesh = SpatialMesh(0.0, 1.0, 31)
    spec = ProblemSpec(ALPHA, mesh, coeff, TimeGrid(1.0, 128),
                       **{init: MeshField.from_function(mesh, lambda x: np.sin(np.pi * x))})
    r = picard_iterate(spec).ratios()
    n = np.arange(1, r.size + 1)
    env = spec.grid.T ** (ALPHA / 2) * gamma(ALPHA * n / 2 + 1) / gamma(ALPHA * (n + 1) / 2 + 1)
    return r / (r[0] / env[0] * env)


def test_picard_envelope_regression():
    # with C fitted on the first ratio the c-dominated velocity case stays within a factor 2
    coeff = Coefficients(a=lambda x: 1 + 0.5 * x, B=lambda x: 0.3 + 0.1 * x, c=lambda x: 3 + x, a0=1.0)
    assert np.max(_envelope_excess(coeff, "b")) < 2.0


@pytest.mark.xfail(strict=True, reason="the first Picard ratio underestimates the envelope constant")
def test_picard_envelope_fitted_on_first_ratio():
    assert np.max(_envelope_excess(Coefficients.constant(1.0, 0.5, 0.0), "a")) <= 1.0 + 1e-9
