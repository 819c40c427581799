import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viscobeam.errors import ArgumentError, SingularOperatorError
from viscobeam.volterra import (
    ConvolutionKernel,
    TimeGrid,
    apply_memory_operator_v,
    invert_memory_operator_v,
    resolvent_kernel,
    solve_second_kind,
    solve_with_resolvent,
    trapezoid_convolution,
)


def test_zero_kernel_returns_source():
    grid = TimeGrid(0.0, 1.0, 200)
    f = np.sin(3 * grid.times)
    u = solve_second_kind(ConvolutionKernel.constant(0.0), f, grid)
    np.testing.assert_array_equal(u, f)


def test_constant_kernel_gives_exponential():
    grid = TimeGrid(0.0, 1.0, 1000)
    u = solve_second_kind(ConvolutionKernel.constant(1.0), 1.0, grid)
    rel = np.max(np.abs(u - np.exp(grid.times)) / np.exp(grid.times))
    assert rel <= 1e-5


def test_linear_kernel_gives_cosh():
    # u = 1 + int (t - s) u(s) ds  <=>  u'' = u, u(0) = 1, u'(0) = 0
    grid = TimeGrid(0.0, 2.0, 2000)
    u = solve_second_kind(ConvolutionKernel(lambda t: t), 1.0, grid)
    np.testing.assert_allclose(u, np.cosh(grid.times), rtol=1e-6)


def test_trapezoid_error_is_second_order():
    errs = []
    for n in (100, 200, 400):
        grid = TimeGrid(0.0, 1.0, n)
        u = solve_second_kind(ConvolutionKernel.constant(1.0), 1.0, grid)
        errs.append(abs(u[-1] - np.e))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(np.abs(ratios - 4.0) < 0.2)


def test_resolvent_of_constant_kernel():
    grid = TimeGrid(0.0, 1.0, 1000)
    R = resolvent_kernel(ConvolutionKernel.constant(1.0), grid)
    np.testing.assert_allclose(R, np.exp(grid.lags), rtol=1e-5)


def test_resolvent_negative_constant():
    grid = TimeGrid(0.0, 2.0, 2000)
    R = resolvent_kernel(ConvolutionKernel.constant(-0.5), grid)
    np.testing.assert_allclose(R, -0.5 * np.exp(-0.5 * grid.lags), rtol=1e-5)


def test_resolvent_of_zero_kernel():
    grid = TimeGrid(0.0, 1.0, 50)
    assert np.all(resolvent_kernel(ConvolutionKernel.constant(0.0), grid) == 0.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(-1.0, 1.0), st.floats(0.1, 3.0), st.floats(-2.0, 2.0))
def test_resolvent_route_agrees_with_direct_solve(lam, rate, freq):
    grid = TimeGrid(0.0, 1.0, 400)
    kernel = ConvolutionKernel(lambda t: lam * np.exp(-rate * t))
    f = np.cos(freq * grid.times)
    direct = solve_second_kind(kernel, f, grid)
    via_r = solve_with_resolvent(resolvent_kernel(kernel, grid), f, grid)
    np.testing.assert_allclose(via_r, direct, atol=1e-4)


def test_trapezoid_convolution_against_closed_form():
    grid = TimeGrid(0.0, 1.0, 800)
    t = grid.times
    out = trapezoid_convolution(np.exp(-t), np.ones_like(t), grid.dt)
    np.testing.assert_allclose(out, 1.0 - np.exp(-t), atol=1e-6)


def test_memory_operator_v_zero_kernel_is_scaling():
    grid = TimeGrid(0.0, 1.0, 100)
    w = np.sin(grid.times)
    out = apply_memory_operator_v(0.0, 1.0, w, grid, leading=1.0)
    np.testing.assert_array_equal(out, w)
    assert np.all(apply_memory_operator_v(0.3, 1.0, 0.0, grid, leading=0.5) == 0.0)


def test_memory_operator_v_round_trip():
    grid = TimeGrid(0.0, 2.0, 400)
    G = lambda t: -0.8 * np.exp(-t)
    weight = lambda t: 1.0 + 0.2 * t
    target = np.cos(2 * grid.times)
    rhs = apply_memory_operator_v(G, weight, target, grid, leading=0.5)
    back = invert_memory_operator_v(G, weight, rhs, grid, leading=0.5)
    np.testing.assert_allclose(back, target, atol=1e-10)


def test_memory_operator_constant_g_matches_second_kind():
    grid = TimeGrid(0.0, 1.0, 500)
    rhs = np.exp(-grid.times)
    lead = 0.5
    w = invert_memory_operator_v(0.6, 1.0, rhs, grid, leading=lead)
    ref = solve_second_kind(ConvolutionKernel.constant(0.6 / (2 * lead)), rhs / lead, grid)
    np.testing.assert_allclose(w, ref, rtol=1e-12)


def test_errors():
    with pytest.raises(ArgumentError):
        TimeGrid(1.0, 0.0, 10)
    with pytest.raises(SingularOperatorError):
        apply_memory_operator_v(0.0, 1.0, 1.0, TimeGrid(0, 1, 10), leading=0.0)
