import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viscobeam.errors import ArgumentError, DomainError
from viscobeam.media import (
    CallableKernel,
    EmmKernel,
    SoundSpeedField,
    derive_wave_speed,
    emm_moments,
    kernel_time_jet,
    read_grid_csv,
    write_grid_csv,
    zero_kernel,
)


def test_wave_speed_single_term():
    assert derive_wave_speed(EmmKernel([-1.0], [1.0]), [0.0, 0.0]) == pytest.approx(1.0)


def test_wave_speed_sums_betas():
    k = EmmKernel([-1.0, -2.0, -3.0], [1.0, 2.0, 3.0])
    assert derive_wave_speed(k, [0.3, -0.2]) == pytest.approx(6.0)
    assert derive_wave_speed(EmmKernel([-1.0, -4.0], [0.5, 0.5]), [0.0, 0.0]) == pytest.approx(1.0)


def test_wave_speed_equals_relaxation_at_zero():
    k = EmmKernel([-0.7, -2.5], [1.3, 0.4])
    x = np.array([0.1, 0.2])
    assert derive_wave_speed(k, x) == pytest.approx(float(k.relaxation(x, 0.0)))


def test_time_jet_single_component():
    jet = kernel_time_jet(EmmKernel([-1.0], [1.0]), [0.0, 0.0], 2)
    assert jet == pytest.approx([-1.0, 1.0, -1.0])


def test_time_jet_two_components():
    jet = kernel_time_jet(EmmKernel([-1.0, -2.0], [1.0, 1.0]), [0.0, 0.0], 1)
    assert jet == pytest.approx([-3.0, 5.0])


def test_time_jet_zero_kernel():
    assert kernel_time_jet(zero_kernel(), [0.0, 0.0], 4) == [0.0] * 5


def test_emm_jet_is_shifted_moments():
    a, b = [-0.5, -1.5, -3.0], [0.2, 1.0, 0.7]
    jet = kernel_time_jet(EmmKernel(a, b), [0.0, 0.0], 4)
    m = emm_moments(a, b, 6)
    np.testing.assert_allclose(jet, m[1:], rtol=1e-12)


def test_callable_kernel_difference_jet_matches_exact():
    kern = CallableKernel(lambda x, t: 2.0 * np.exp(-1.5 * t) + 0 * x[..., 0], t_max=5.0)
    jet = kernel_time_jet(kern, [0.0, 0.0], 2)
    np.testing.assert_allclose(jet, [2.0, -3.0, 4.5], rtol=1e-5)


def test_emm_moments_examples():
    m = emm_moments([-1, -2, -3], [1, 2, 3], 6)
    np.testing.assert_array_equal(m, [6, -14, 36, -98, 276, -794])
    np.testing.assert_array_equal(emm_moments([-1], [2], 2), [2, -2])
    np.testing.assert_array_equal(emm_moments([-1, -2], [0, 0], 5), np.zeros(5))


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, -0.1), min_size=1, max_size=4),
       st.floats(0.1, 3.0), st.integers(1, 8))
def test_emm_moments_direct_sum(alphas, beta, count):
    betas = [beta * (j + 1) for j in range(len(alphas))]
    m = emm_moments(alphas, betas, count)
    for k in range(count):
        assert m[k] == pytest.approx(sum(a**k * b for a, b in zip(alphas, betas)), rel=1e-12, abs=1e-12)


def test_emm_rejects_bad_parameters():
    with pytest.raises(ArgumentError):
        EmmKernel([0.5], [1.0])
    with pytest.raises(ArgumentError):
        EmmKernel([-1.0], [-1.0])
    with pytest.raises(ArgumentError):
        EmmKernel([-1.0, -1.0], [1.0, 1.0])


def test_kernel_domain_checks():
    k = EmmKernel([-1.0], [1.0], t_max=2.0, support=((-1, 1), (-1, 1)))
    with pytest.raises(DomainError):
        k.G([2.0, 0.0], 0.5)
    with pytest.raises(DomainError):
        k.G([0.0, 0.0], 3.0)


def test_field_outside_box():
    f = SoundSpeedField.homogeneous(1.0)
    with pytest.raises(DomainError):
        f.value([5.0, 0.0])


@pytest.mark.parametrize("field", [
    SoundSpeedField.gaussian_lens(1.0, 0.3, 0.8, center=(0.2, -0.1)),
])
def test_lens_derivatives_match_differences(field):
    rng = np.random.default_rng(3)
    h = 1e-5
    for x in rng.uniform(-1.5, 1.5, size=(5, 2)):
        fd = np.array([(field.value(x + h * e) - field.value(x - h * e)) / (2 * h) for e in np.eye(2)])
        np.testing.assert_allclose(field.gradient(x), fd, atol=1e-8)
        fdh = np.array([(field.gradient(x + h * e) - field.gradient(x - h * e)) / (2 * h) for e in np.eye(2)])
        np.testing.assert_allclose(field.hessian(x), fdh, atol=1e-7)


def test_gridded_field_reproduces_quadratic(tmp_path):
    xs = np.linspace(-2, 2, 21)
    X, Y = np.meshgrid(xs, xs)
    values = 2.0 + 0.1 * X**2 + 0.05 * X * Y
    path = tmp_path / "c.csv"
    write_grid_csv(path, values, -2.0, -2.0, 0.2, 0.2, header="# test\n")
    back, geom = read_grid_csv(path)
    np.testing.assert_array_equal(back, values)
    f = SoundSpeedField.from_csv(path)
    x = np.array([0.33, -0.71])
    assert f.value(x) == pytest.approx(2.0 + 0.1 * x[0] ** 2 + 0.05 * x[0] * x[1], abs=1e-10)
    np.testing.assert_allclose(f.gradient(x), [0.2 * x[0] + 0.05 * x[1], 0.05 * x[0]], atol=1e-9)


def test_gridded_field_rejects_nonpositive():
    with pytest.raises(ArgumentError):
        SoundSpeedField.gridded(-np.ones((5, 5)), 0, 0, 1, 1)
