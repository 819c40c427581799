import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from viscobeam.beams.ladder import build_ladder
from viscobeam.beams.riccati import homogeneous_path
from viscobeam.errors import DegenerateBeamError, UnsupportedConfigurationError
from viscobeam.media import ExpSumKernel, SoundSpeedField, zero_kernel
from viscobeam.rays import Disc, PhasePoint
from viscobeam.xray import (
    PixelGrid,
    Sinogram,
    amplitude_to_line_integral,
    beam_line_data,
    build_chords,
    forward_matrix,
    forward_transform,
    geometric_term,
    invert_transform,
    isotropic_hessian,
    order1_correction,
    recover_kernel_order0,
    relative_error,
)

DISC = Disc()
UNIT = SoundSpeedField.homogeneous(1.0, ((-1.5, 1.5), (-1.5, 1.5)))


def _bump(x):
    return np.exp(-8.0 * np.sum((np.asarray(x) - [0.2, -0.1]) ** 2, axis=-1))


def test_forward_of_one_is_chord_length():
    chords = build_chords(UNIT, DISC, 6, 9)
    s = forward_transform(lambda x: np.ones(x.shape[:-1]), chords)
    offsets = -1.0 + (2 * np.arange(9) + 1) / 9
    expected = np.tile(2 * np.sqrt(1 - offsets**2), 6)
    np.testing.assert_allclose(s.values, expected, rtol=1e-12)


def test_faster_medium_halves_sigma_integrals():
    fast = SoundSpeedField.homogeneous(4.0, ((-1.5, 1.5), (-1.5, 1.5)))
    one = lambda x: np.ones(x.shape[:-1])
    a = forward_transform(one, build_chords(UNIT, DISC, 4, 5)).values
    b = forward_transform(one, build_chords(fast, DISC, 4, 5)).values
    np.testing.assert_allclose(b, a / 2, rtol=1e-12)


def test_forward_of_zero_is_zero():
    s = forward_transform(lambda x: np.zeros(x.shape[:-1]), build_chords(UNIT, DISC, 5, 5))
    assert np.all(s.values == 0)


@settings(max_examples=15, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(0.5, 6))
def test_forward_linear_and_positive(a, b, width):
    chords = build_chords(UNIT, DISC, 5, 7)
    f = lambda x: np.exp(-width * np.sum(x * x, axis=-1))
    g = lambda x: 1.0 + x[..., 0] ** 2
    lhs = forward_transform(lambda x: a * f(x) + b * g(x), chords).values
    rhs = a * forward_transform(f, chords).values + b * forward_transform(g, chords).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    assert np.all(forward_transform(f, chords).values > 0)


def test_rotation_equivariance():
    n_angles = 8
    chords = build_chords(UNIT, DISC, n_angles, 7)
    turn = np.pi / n_angles
    R = np.array([[np.cos(turn), -np.sin(turn)], [np.sin(turn), np.cos(turn)]])
    f = lambda x: np.exp(-3 * np.sum((x - [0.3, 0.1]) ** 2, axis=-1)) * (1 + x[..., 0])
    rotated = lambda x: f(x @ R)          # f(R^T x)
    s = forward_transform(f, chords).values.reshape(n_angles, 7)
    sr = forward_transform(rotated, chords).values.reshape(n_angles, 7)
    np.testing.assert_allclose(sr[1:], s[:-1], atol=1e-9)


def test_matrix_route_matches_pointwise_route_on_smooth_field():
    grid = PixelGrid.covering(DISC, 64)
    chords = build_chords(UNIT, DISC, 12, 16)
    A = forward_matrix(chords, grid)
    f = lambda x: np.exp(-4 * np.sum(x * x, axis=-1))
    via_matrix = A @ f(grid.centers()).ravel()
    direct = forward_transform(f, chords).values
    assert np.max(np.abs(via_matrix - direct)) <= 2e-3 * np.max(direct)


def test_zero_sinogram_inverts_to_zero():
    chords = build_chords(UNIT, DISC, 10, 10)
    out = invert_transform(Sinogram(np.zeros(chords.count), chords), PixelGrid.covering(DISC, 16))
    assert np.all(out.values[out.mask] == 0)


@pytest.mark.slow
def test_phantom_recovery_and_round_trip():
    grid = PixelGrid.covering(DISC, 64)
    chords = build_chords(UNIT, DISC, 180, 64)
    f = lambda x: np.exp(-4 * np.sum(x * x, axis=-1))
    sino = forward_transform(f, chords)
    A = forward_matrix(chords, grid)
    rec = invert_transform(sino, grid, lam=1e-4, A=A)
    assert relative_error(rec, f(grid.centers())) <= 0.05
    back = A @ np.nan_to_num(rec.values).ravel()
    assert np.linalg.norm(back - sino.values) / np.linalg.norm(sino.values) <= 0.02


def test_amplitude_to_line_integral_examples():
    assert amplitude_to_line_integral(1.5 - 0.2j, 1.5 - 0.2j) == 0
    b0 = -0.3 + 2.5j
    s = np.linspace(0.0, 3.0, 301)
    history = 2.0 * np.exp(b0 * s)
    # the phase winds past pi, so only the history route recovers b0 * span
    assert amplitude_to_line_integral(history[0], history[-1], history) == pytest.approx(3.0 * b0)
    with pytest.raises(DegenerateBeamError):
        amplitude_to_line_integral(0.0, 1.0)


def test_beam_line_data_matches_transported_amplitudes():
    kernel = ExpSumKernel([_bump], [-1.0])
    chords = build_chords(UNIT, DISC, 3, 3, samples=129)
    H0 = isotropic_hessian()
    data = beam_line_data(UNIT, kernel, chords, H0, level=1)
    for i in range(chords.count):
        start = PhasePoint.null_from_direction(UNIT, chords.entries[i], chords.directions[i])
        span = chords.sigma[i, -1]
        path = homogeneous_path(UNIT, start, H0, span)
        lad = build_ladder(UNIT, kernel, path, order=1)
        s = np.linspace(0.0, span, 200)
        a0 = lad.levels[0](s)
        log_ratio = amplitude_to_line_integral(a0[0], a0[-1], a0)
        assert data.log_ratio.values[i] == pytest.approx(log_ratio, abs=1e-4)
        ratio = lad.levels[1](np.array([span]))[0] / a0[-1]
        assert data.ratio1.values[i] == pytest.approx(ratio, abs=1e-4)


def test_recovery_is_linear_in_kernel():
    grid = PixelGrid.covering(DISC, 24)
    chords = build_chords(UNIT, DISC, 40, 24)
    geo = geometric_term(UNIT, chords)
    A = forward_matrix(chords, grid)
    outs = []
    for scale in (1.0, 2.0):
        kernel = ExpSumKernel([lambda x, s=scale: s * _bump(x)], [-1.0])
        line = beam_line_data(UNIT, kernel, chords).log_ratio
        outs.append(recover_kernel_order0(line, UNIT, geo, grid, A=A))
    m = outs[0].mask
    err = np.linalg.norm(outs[1].values[m] - 2 * outs[0].values[m]) / np.linalg.norm(2 * outs[0].values[m])
    assert err <= 0.01


def test_zero_kernel_recovers_floor():
    grid = PixelGrid.covering(DISC, 16)
    chords = build_chords(UNIT, DISC, 20, 16)
    geo = geometric_term(UNIT, chords)
    line = beam_line_data(UNIT, zero_kernel(), chords).log_ratio
    rec = recover_kernel_order0(line, UNIT, geo, grid)
    assert np.max(np.abs(rec.values[rec.mask])) <= 1e-8


def test_variable_speed_rejected():
    lens = SoundSpeedField.gaussian_lens(1.0, 0.3, 1.0, bbox=((-1.5, 1.5), (-1.5, 1.5)))
    chords = build_chords(UNIT, DISC, 2, 2)
    with pytest.raises(UnsupportedConfigurationError):
        beam_line_data(lens, zero_kernel(), chords)
    grid = PixelGrid.covering(DISC, 8)
    fake = invert_transform(Sinogram(np.zeros(chords.count), chords), grid)
    with pytest.raises(UnsupportedConfigurationError):
        order1_correction(fake, lens, chords)
