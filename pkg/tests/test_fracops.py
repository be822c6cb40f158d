import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import gamma

from fdwave.fracops import (
    TimeGrid,
    TimeSeries,
    caputo_shifted,
    convolve_singular,
    convolve_trapezoid,
    derivative,
    duhamel_kernel,
    rl_integral,
    rl_integral_backward,
    trapezoid_weights,
)
from fdwave.mlf import mittag_leffler

GRID = TimeGrid(1.0, 512)


def series(fn, grid=GRID):
    return TimeSeries.from_function(grid, fn)


def test_grid_validation():
    with pytest.raises(ValueError):
        TimeGrid(0.0, 4)
    with pytest.raises(ValueError):
        TimeGrid(1.0, 2.5)
    with pytest.raises(ValueError):
        TimeSeries(TimeGrid(1.0, 4), np.zeros(4))


def test_running_integral_of_one():
    out = rl_integral(1.0, series(lambda t: np.ones_like(t)))
    assert np.allclose(out.values, GRID.nodes, atol=1e-14)
    back = rl_integral_backward(1.0, series(lambda t: np.ones_like(t)))
    assert np.allclose(back.values, GRID.T - GRID.nodes, atol=1e-14)


@pytest.mark.parametrize("gam, p", [(0.5, 1.0), (0.3, 2.0), (1.5, 1.0), (0.5, 0.0)])
def test_power_rule(gam, p):
    t = GRID.nodes
    out = rl_integral(gam, series(lambda s: s**p)).values
    exact = gamma(p + 1) / gamma(p + 1 + gam) * t ** (p + gam)
    # piecewise-linear data is exact for p <= 1
    tol = 1e-12 if p <= 1 else 2 * GRID.dt**2
    assert np.max(np.abs(out - exact)) < tol


def test_order_validation():
    with pytest.raises(ValueError):
        rl_integral(0.0, series(np.sin))
    with pytest.raises(ValueError):
        rl_integral_backward(-1.0, series(np.sin))


@pytest.mark.parametrize("a, b", [(0.3, 0.7), (0.5, 0.5), (0.9, 0.6)])
def test_semigroup(a, b):
    f = series(lambda t: np.sin(t) + t**2)
    two = rl_integral(a, rl_integral(b, f)).values
    one = rl_integral(a + b, f).values
    assert np.max(np.abs(two - one)) < 10 * GRID.dt**2


def test_semigroup_against_running_integral():
    f = series(np.sin)
    two = rl_integral(0.3, rl_integral(0.7, f)).values
    assert np.max(np.abs(two - (1 - np.cos(GRID.nodes)))) < 5 * GRID.dt**2


def test_backward_is_reflection_bit_exact():
    rng = np.random.default_rng(0)
    f = TimeSeries(GRID, rng.standard_normal(GRID.size))
    back = rl_integral_backward(0.4, f).values
    fwd = rl_integral(0.4, f.reversed()).values[::-1]
    assert np.array_equal(back, fwd)


@pytest.mark.parametrize("gam", [0.2, 0.4, 0.5, 0.8, 1.3])
def test_duality_compatible_endpoints(gam):
    # f(0) = g(T) = 0 removes the endpoint singularities from the outer trapezoid sum
    f = series(lambda t: np.sin(t) + 0.5 * t**2)
    g = series(lambda t: (1.0 - t) * np.cos(2 * t))
    w = trapezoid_weights(GRID.n_steps) * GRID.dt
    lhs = np.sum(w * rl_integral(gam, f).values * g.values)
    rhs = np.sum(w * f.values * rl_integral_backward(gam, g).values)
    assert abs(lhs - rhs) < 10 * GRID.dt**2


def test_duality_general_endpoints_converges_at_reduced_rate():
    # with f(T) g(T) != 0 the outer sum sees (T - t)^gamma and the gap is O(dt^(1+gamma))
    gam, gaps = 0.4, []
    for n in (128, 256, 512, 1024):
        grid = TimeGrid(1.0, n)
        f, g = series(lambda t: np.sin(t) + 0.5 * t**2, grid), series(lambda t: np.cos(2 * t), grid)
        w = trapezoid_weights(n) * grid.dt
        gaps.append(abs(np.sum(w * rl_integral(gam, f).values * g.values)
                        - np.sum(w * f.values * rl_integral_backward(gam, g).values)))
    rates = np.log2(np.array(gaps[:-1]) / np.array(gaps[1:]))
    assert np.allclose(rates, 1 + gam, atol=0.1)


@pytest.mark.parametrize("gam", [0.3, 0.5, 0.9])
def test_convolution_interchange(gam):
    t = GRID.nodes
    kern = np.exp(-t) * (1 + t)
    h = series(lambda s: np.sin(3 * s) + s)
    lhs = rl_integral(gam, TimeSeries(GRID, convolve_trapezoid(kern, h.values, GRID.dt))).values
    rhs = convolve_trapezoid(kern, rl_integral(gam, h).values, GRID.dt)
    assert np.max(np.abs(lhs - rhs)) < 10 * GRID.dt**2


@settings(max_examples=25, deadline=None)
@given(gam=st.floats(0.1, 1.9), c=st.floats(-3, 3), seed=st.integers(0, 2**16))
def test_linearity(gam, c, seed):
    rng = np.random.default_rng(seed)
    grid = TimeGrid(1.0, 32)
    f, g = rng.standard_normal((2, grid.size))
    lhs = rl_integral(gam, TimeSeries(grid, f + c * g)).values
    rhs = rl_integral(gam, TimeSeries(grid, f)).values + c * rl_integral(gam, TimeSeries(grid, g)).values
    assert np.allclose(lhs, rhs, atol=1e-12 * (1 + abs(c)) * 10)


def test_derivative_exact_on_quadratics():
    v = 3 * GRID.nodes**2 - GRID.nodes + 2
    assert np.allclose(derivative(v, GRID.dt), 6 * GRID.nodes - 1, atol=1e-10)
    with pytest.raises(ValueError):
        derivative(np.zeros(2), 0.1)


def test_caputo_annihilates_affine():
    u = series(lambda t: 2.0 + 3.0 * t)
    assert np.max(np.abs(caputo_shifted(1.5, u, 2.0, 3.0).values)) < 1e-9


def test_caputo_power_rule():
    alpha, t = 1.5, GRID.nodes
    out = caputo_shifted(alpha, series(lambda s: s**2), 0.0, 0.0).values
    exact = 2 * t ** (2 - alpha) / gamma(3 - alpha)
    away = t >= 0.1
    assert np.max(np.abs(out - exact)[away]) < 10 * GRID.dt**2 / 0.1
    assert np.max(np.abs(out - exact)) < 5 * GRID.dt ** (2 - alpha)


def test_caputo_of_relaxation_function():
    alpha, lam, t = 1.5, 4.0, GRID.nodes
    e1 = series(lambda s: mittag_leffler(-lam * s**alpha, alpha, 1.0))
    out = caputo_shifted(alpha, e1, 1.0, 0.0).values
    away = t >= 0.1
    assert np.max(np.abs(out + lam * e1.values)[away]) < 2e-3


def test_caputo_inverts_rl_integral_on_flat_start():
    alpha, t = 1.5, GRID.nodes
    f = series(lambda s: s**2 * np.exp(-s))
    out = caputo_shifted(alpha, rl_integral(alpha, f), 0.0, 0.0).values
    assert np.max(np.abs(out - f.values)) < 20 * GRID.dt


def test_caputo_validation():
    with pytest.raises(ValueError):
        caputo_shifted(1.5, series(lambda t: 1.0 + t), 0.0, 0.0)
    with pytest.raises(ValueError):
        caputo_shifted(1.5, TimeSeries(TimeGrid(1.0, 1), np.zeros(2)), 0.0, 0.0)


def test_duhamel_kernel_examples():
    alpha = 1.5
    rho = duhamel_kernel(alpha, series(lambda t: np.ones_like(t)), 1.0)
    assert rho.singular == 1.0 and np.max(np.abs(rho.regular.values)) == 0.0
    rho = duhamel_kernel(alpha, series(lambda t: t), 0.0, g_prime=lambda t: np.ones_like(t))
    assert rho.singular == 0.0
    assert np.allclose(rho.regular.values, GRID.nodes ** (alpha - 1) / gamma(alpha), atol=1e-12)
    with pytest.raises(ValueError):
        duhamel_kernel(1.0, series(np.sin), 0.0)


def test_duhamel_kernel_round_trip():
    alpha = 1.5
    g = series(lambda t: 1 + t**2 / 2)
    rho = duhamel_kernel(alpha, g, 1.0)
    # J^{2-alpha} rho = g0 + J^{2-alpha} J^{alpha-1} g' = g0 + J^1 g'
    back = 1.0 + rl_integral(2 - alpha, rho.regular).values
    assert np.max(np.abs(back - g.values)) < 10 * GRID.dt


def test_convolve_singular_examples():
    alpha = 1.5
    rho = duhamel_kernel(alpha, series(lambda t: np.ones_like(t)), 1.0)
    assert np.all(convolve_singular(rho, series(np.zeros_like)).values == 0)
    out = convolve_singular(rho, series(lambda t: t)).values
    assert np.allclose(out, GRID.nodes**alpha / gamma(alpha + 1), atol=1e-12)
    with pytest.raises(ValueError):
        convolve_singular(rho, TimeSeries(TimeGrid(1.0, 8), np.zeros(9)))


def test_convolve_singular_converges_under_refinement():
    alpha = 1.5

    def vfun(t):
        return np.sin(2 * t) + t**2

    vals = []
    for n in (100, 200, 400, 800):
        grid = TimeGrid(1.0, n)
        rho = duhamel_kernel(alpha, TimeSeries.from_function(grid, lambda t: 2 + np.sin(t)), 2.0, g_prime=np.cos)
        vals.append(convolve_singular(rho, TimeSeries.from_function(grid, vfun)).values[-1])
    diffs = np.abs(np.diff(vals))
    # the kernel is (T - s)^(alpha - 2) near the top, so the rate is dt^(alpha)
    assert np.all(diffs[:-1] / diffs[1:] > 2.5)
    assert diffs[-1] / abs(vals[-1]) < 2e-5


def test_convolve_singular_against_adaptive_quadrature():
    # rho * v = g0 J^{alpha-1} v + J^{alpha-1} (g' * v); both integrals by QUADPACK with the algebraic weight
    from scipy.integrate import quad

    alpha, t_end = 1.5, 1.0

    def vfun(t):
        return np.sin(2 * t) + t**2

    def gv(s):
        return quad(lambda r: np.cos(s - r) * vfun(r), 0.0, s, epsabs=1e-13)[0]

    def rl(fn):
        val = quad(fn, 0.0, t_end, weight="alg", wvar=(0.0, alpha - 2.0), epsabs=1e-13)[0]
        return val / gamma(alpha - 1.0)

    oracle = 2.0 * rl(vfun) + rl(gv)
    grid = TimeGrid(t_end, 100)
    rho = duhamel_kernel(alpha, TimeSeries.from_function(grid, lambda t: 2 + np.sin(t)), 2.0, g_prime=np.cos)
    out = convolve_singular(rho, TimeSeries.from_function(grid, vfun)).values[-1]
    assert abs(out - oracle) / abs(oracle) < 1e-3
