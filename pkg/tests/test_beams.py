import numpy as np
import pytest
from scipy.integrate import quad

from viscobeam.beams.exppoly import ExpPoly
from viscobeam.beams.geometric import geometrical_optics_build, kernel_resolvent
from viscobeam.beams.ladder import amplitude_corrections, build_ladder, higher_transport, principal_transport
from viscobeam.beams.quasimode import (
    assemble_quasimode,
    beam_residual,
    residual_grid,
    residual_norm,
    stationary_phase_value,
)
from viscobeam.beams.riccati import BeamPhase, homogeneous_path, riccati_closed_form, solve_riccati
from viscobeam.errors import PreconditionError, UnsupportedConfigurationError, UnsupportedOrderError
from viscobeam.media import SoundSpeedField, exponential_kernel, zero_kernel
from viscobeam.rays import PhasePoint

UNIT = SoundSpeedField.homogeneous(1.0, bbox=((-8, 8), (-8, 8)))
LENS = SoundSpeedField.gaussian_lens(1.0, 0.3, 1.0, bbox=((-8, 8), (-8, 8)))


def _straight(field=UNIT, span=4.0, H0=None):
    start = PhasePoint.null_from_direction(field, [-2.0, 0.0], [1.0, 0.0])
    H0 = 1j * np.eye(3) if H0 is None else H0
    return start, homogeneous_path(field, start, H0, span)


# Riccati ---------------------------------------------------------------------

def test_riccati_closed_form_imaginary_diagonal():
    s = np.linspace(0.0, 3.0, 7)
    H = riccati_closed_form(1j * np.eye(3), 1.0, s)
    for j in range(3):
        np.testing.assert_allclose(H[:, j, j].imag, 1.0 / (1.0 + s**2), rtol=1e-13)
    np.testing.assert_allclose(H[0], 1j * np.eye(3))


def test_riccati_numeric_matches_closed_form():
    field = SoundSpeedField.homogeneous(2.0, bbox=((-8, 8), (-8, 8)))
    start = PhasePoint.null_from_direction(field, [-2.0, 0.5], [1.0, 0.2])
    H0 = np.array([[2j, 0.3, 0.1], [0.3, 1 + 1j, 0.0], [0.1, 0.0, 0.5j]])
    path = solve_riccati(field, start, H0, span=2.0)
    np.testing.assert_allclose(path.H, riccati_closed_form(H0, 2.0, path.sigma), atol=1e-8)


def test_riccati_lens_refinement():
    start = PhasePoint.null_from_direction(LENS, [-3.0, 0.4], [1.0, 0.0])
    coarse = solve_riccati(LENS, start, 1j * np.eye(3), span=6.0, tol=1e-10)
    fine = solve_riccati(LENS, start, 1j * np.eye(3), span=6.0, tol=5e-11)
    assert np.max(np.abs(coarse.H - fine.H)) <= 1e-7
    assert coarse.symmetry_defect() <= 1e-9
    assert np.all(coarse.imag_spectrum()[:, 0] > 0)


def test_riccati_rejects_non_symmetric_start():
    start = PhasePoint.null_from_direction(UNIT, [0.0, 0.0], [1.0, 0.0])
    H0 = 1j * np.eye(3)
    H0[0, 1] = 0.5
    with pytest.raises(PreconditionError):
        solve_riccati(UNIT, start, H0, span=1.0)


def test_eikonal_defect_is_cubic_off_ray():
    start = PhasePoint.null_from_direction(LENS, [-3.0, 0.4], [1.0, 0.0])
    phase = BeamPhase(solve_riccati(LENS, start, 1j * np.eye(3), span=6.0), LENS)
    z0, _, _ = phase.path.state(np.array([3.0]))
    normal = np.array([0.0, 1.0, 0.0])
    d = np.array([abs(phase.eikonal_defect(z0[0] + eps * normal, 3.0)[0]) for eps in (0.04, 0.02, 0.01)])
    rates = np.log2(d[:-1] / d[1:])
    assert np.all(rates > 2.7)


# principal transport -----------------------------------------------------------

def _det_oracle(H0, c, s):
    # exp(-1/2 int box phi) = det(I + s H0 C)^(-1/2) on the continuous branch
    C = np.diag([-c, -c, 1.0])
    fine = np.linspace(0.0, s.max(), 4001)
    dets = np.array([np.linalg.det(np.eye(3) + t * H0 @ C) for t in fine])
    logdet = np.log(np.abs(dets)) + 1j * np.unwrap(np.angle(dets))
    vals = np.exp(-0.5 * logdet)
    return np.interp(s, fine, vals.real) + 1j * np.interp(s, fine, vals.imag)


def test_leading_amplitude_free_space_matches_determinant():
    H0 = np.array([[1j, 0.2, 0.0], [0.2, 2j, 0.0], [0.0, 0.0, 1j]])
    start, path = _straight(H0=H0)
    lad = principal_transport(UNIT, zero_kernel(), path)
    s = np.linspace(0.0, 4.0, 9)
    np.testing.assert_allclose(lad.levels[0](s), _det_oracle(H0, 1.0, s), atol=1e-6)


def test_leading_amplitude_memory_factor():
    field = SoundSpeedField.homogeneous(2.0, bbox=((-8, 8), (-8, 8)))
    start = PhasePoint.null_from_direction(field, [-2.0, 0.0], [1.0, 0.0])
    path = homogeneous_path(field, start, 1j * np.eye(3), 3.0)
    kernel = exponential_kernel(0.6, -1.0)
    s = np.linspace(0.0, 3.0, 7)
    with_memory = principal_transport(field, kernel, path).levels[0](s)
    without = principal_transport(field, zero_kernel(), path).levels[0](s)
    # G(0) |xi|^2 / tau = G(0) / c on a null ray
    np.testing.assert_allclose(with_memory / without, np.exp(-0.5 * 0.6 * s / 2.0), rtol=1e-8)


def test_leading_amplitude_launch_value():
    _, path = _straight()
    lad = principal_transport(UNIT, exponential_kernel(0.3, -2.0), path, launch=2.5)
    assert lad.levels[0](np.array([0.0]))[0] == pytest.approx(2.5)


def test_higher_levels():
    _, path = _straight()
    lad = build_ladder(UNIT, exponential_kernel(0.4, -1.0), path, order=2)
    for lv in lad.levels[1:]:
        assert abs(lv(np.array([0.0]))[0]) <= 1e-12
    with pytest.raises(UnsupportedOrderError):
        higher_transport(3, lad)


def test_higher_levels_vanish_without_memory():
    _, path = _straight()
    lad = build_ladder(UNIT, zero_kernel(), path, order=2)
    assert np.all(lad.levels[1].values == 0)
    assert np.all(lad.levels[2].values == 0)


# stationary amplitudes -----------------------------------------------------------

def test_stationary_amplitude_zero_kernel():
    _, path = _straight()
    lad = build_ladder(UNIT, zero_kernel(), path)
    st = amplitude_corrections(lad, [0.5, 1.0], 2.0)
    assert np.all(st.values == 0)
    with pytest.raises(UnsupportedOrderError):
        amplitude_corrections(lad, [0.5], 2.0, level=1)


def test_stationary_amplitude_exponential_kernel_closed_form():
    A, r = 0.5, -1.0
    _, path = _straight()
    lad = build_ladder(UNIT, exponential_kernel(A, r), path)
    nodes = np.array([0.5, 1.5])
    st = amplitude_corrections(lad, nodes, 2.0, n_steps=2000)
    z, zeta, H = path.state(nodes)
    for i, s in enumerate(nodes):
        grad = zeta[i] + H[i] @ np.array([0.0, 0.0, -z[i, 2]])
        beta = lad.levels[0](np.array([s]))[0] / grad[2]
        # w = G a0/phi_t + G * w has solution beta A exp((r + A) t) for c = 1
        expected = beta * A * np.exp((r + A) * st.times)
        np.testing.assert_allclose(st.values[i], expected, atol=1e-6 * abs(beta))


# quasimode -------------------------------------------------------------------------

def test_zero_quasimode_is_zero():
    _, path = _straight()
    phase = BeamPhase(path, UNIT)
    lad = build_ladder(UNIT, exponential_kernel(0.5, -1.0), path, launch=0.0)
    qm = assemble_quasimode(phase, lad, 40.0)
    assert np.all(qm.evaluate(np.array([[0.0, 0.0, 2.0], [0.5, 0.1, 2.5]])) == 0)
    grid = residual_grid(phase, 40.0, (1.5, 2.5))
    assert residual_norm(qm, UNIT, exponential_kernel(0.5, -1.0), grid) == 0.0
    assert beam_residual(qm, exponential_kernel(0.5, -1.0), grid, check=False).norms[0] == 0.0


def test_off_ray_gaussian_bound():
    k = 100.0
    _, path = _straight(span=4.0)
    phase = BeamPhase(path, UNIT)
    qm = assemble_quasimode(phase, build_ladder(UNIT, zero_kernel(), path), k)
    s0 = 2.0
    z0 = path.state(np.array([s0]))[0][0]
    lam = path.imag_spectrum(np.array([s0]))[0]
    on = abs(qm.evaluate(z0))
    off = abs(qm.evaluate(z0 + np.array([0.0, 5.0 / np.sqrt(k * lam.min()), 0.0])))
    assert off <= np.exp(-10) * on


def test_stationary_phase_value_converges():
    devs = []
    _, path = _straight(span=4.0)
    phase = BeamPhase(path, UNIT)
    lad = build_ladder(UNIT, exponential_kernel(0.4, -1.0), path)
    z0 = path.state(np.array([2.0]))[0][0]
    for k in (40.0, 80.0, 160.0):
        qm = assemble_quasimode(phase, lad, k)
        num = complex(qm.evaluate(z0))
        ref = stationary_phase_value(qm, 2.0)
        devs.append(abs(num - ref) / abs(ref))
    assert max(devs) < 0.05


# plane-wave geometrical optics ------------------------------------------------------

def test_go_rejects_variable_speed():
    with pytest.raises(UnsupportedConfigurationError):
        geometrical_optics_build(LENS, zero_kernel(), [1.0, 0.0], 1)


def test_kernel_resolvent_single_exponential():
    # K = (A/c) e^{rt} has resolvent (A/c) e^{(r + A/c) t}
    R = kernel_resolvent([0.6], [-2.0], 2.0)
    t = np.linspace(0.0, 3.0, 7)
    np.testing.assert_allclose(R(t).real, 0.3 * np.exp(-1.7 * t), rtol=1e-12)


def test_go_mode_residual_against_differences():
    field = SoundSpeedField.homogeneous(1.5)
    kernel = exponential_kernel(0.7, -1.3)
    sol = geometrical_optics_build(field, kernel, [1.0, 0.0], 1)
    omega, rho = np.array([0.4]), np.array([0.9])
    lad = sol.ladder(omega, rho)
    k = 6.0
    dt = 1e-4
    t = np.arange(0.0, 2.0 + dt / 2, dt)
    v = lad.value(k, t)[0]
    v2 = (v[2:] - 2 * v[1:-1] + v[:-2]) / dt**2
    G = 0.7 * np.exp(-1.3 * t)
    conv = np.array([np.trapezoid(G[:i + 1][::-1] * v[:i + 1], dx=dt) for i in range(len(t))])
    cp = k * k - 2 * k * omega[0] + rho[0]
    oracle = v2 + cp * v[1:-1] - (cp / 1.5) * conv[1:-1]
    exact = sol.mode_residual(lad, k, t[1:-1])[0]
    sel = slice(None, None, 997)
    np.testing.assert_allclose(exact[sel], oracle[sel], atol=2e-3 * np.max(np.abs(oracle)))


def test_go_leading_amplitude_formula_against_mode_solution():
    field = SoundSpeedField.homogeneous(1.0)
    kernel = exponential_kernel(0.5, -1.0)
    sol = geometrical_optics_build(field, kernel, [1.0, 0.0], 2, envelope_width=0.7)
    x, y, u = sol.evaluate_grid(400.0, 1.0, n=64, half_width=4.0)
    X, Y = np.meshgrid(x, y)
    a0 = sol.leading_amplitude(np.stack([X, Y], -1), 1.0)
    assert np.max(np.abs(np.abs(u) - a0)) <= 5e-3


def test_go_residual_decays_with_order():
    field = SoundSpeedField.homogeneous(1.0)
    kernel = exponential_kernel(0.5, -1.0)
    ks = np.array([20.0, 40.0, 80.0])
    for order in (1, 2):
        sol = geometrical_optics_build(field, kernel, [1.0, 0.0], order)
        norms = [sol.residual_norm(k, 1.0) for k in ks]
        slope = np.polyfit(np.log(ks), np.log(norms), 1)[0]
        assert slope <= -order + 0.1


def test_exppoly_convolution_against_quadrature():
    a = ExpPoly({-1.0 + 0j: [1.0, 2.0]})
    b = ExpPoly.exponential(-0.5 + 0j, 3.0)
    t = 1.3
    ref, _ = quad(lambda s: (a(np.array([t - s]))[0] * b(np.array([s]))[0]).real, 0.0, t)
    assert a.convolve(b)(np.array([t]))[0].real == pytest.approx(ref, rel=1e-10)
