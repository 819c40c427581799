import numpy as np
import pytest

from viscobeam.errors import CFLViolation, ConfigurationError, DataModelViolation
from viscobeam.fdtd import (
    ProtectedRegion,
    SimGrid,
    SourceSpec,
    load_run_config,
    read_traces_binary,
    read_traces_csv,
    simulate,
    source_to_solution,
    write_traces_binary,
    write_traces_csv,
)
from viscobeam.media import EmmKernel, ExpSumKernel, SoundSpeedField, exponential_kernel, zero_kernel
from viscobeam.rays import Disc

BOX = ((-2.0, 2.0), (-2.0, 2.0))


def _bump(radius=0.5, center=(0.0, 0.0)):
    c = np.asarray(center)

    def fn(x):
        r2 = np.sum((x - c) ** 2, axis=-1) / radius**2
        return np.where(r2 < 1, np.exp(-1.0 / np.maximum(1 - r2, 1e-300)) * np.e, 0.0)

    return fn


def test_zero_run_is_zero():
    grid = SimGrid.from_cfl((41, 41), (-2, -2), (2, 2), 1.0, 0.5, 1.0)
    res = simulate(SoundSpeedField.homogeneous(1.0, BOX), exponential_kernel(0.5, -1.0), grid,
                   receivers=[[0.5, 0.5]], record_energy=True)
    assert np.all(res.traces == 0)
    assert np.all(res.state.u == 0)
    assert np.all(res.energy == 0)


def test_discrete_dalembert_at_unit_cfl():
    field = SoundSpeedField.homogeneous(1.0, ((0.0, 10.0),))
    grid = SimGrid((1001,), (0.0,), (10.0,), 0.01, 300)
    x = grid.axes()[0]
    pulse = np.exp(-((x - 3.0) / 0.1) ** 2)
    shifted = np.roll(pulse, 1)
    res = simulate(field, zero_kernel(1), grid, u0=pulse, u1=shifted)
    np.testing.assert_allclose(res.state.u, np.roll(pulse, 300), atol=1e-12)


@pytest.mark.parametrize("width", [0.05, 0.03])
def test_plane_pulse_memory_decay(width):
    # the high-frequency damping rate is G(0) / (2c)
    G0 = 0.5
    field = SoundSpeedField.homogeneous(1.0, ((-1.5, 3.5),))
    grid = SimGrid.from_cfl((4001,), (-1.5,), (3.5,), 1.0, 0.5, 2.0)
    u0 = lambda x: np.exp(-(x[..., 0] / width) ** 2)
    v0 = lambda x: 2 * x[..., 0] / width**2 * np.exp(-(x[..., 0] / width) ** 2)
    res = simulate(field, ExpSumKernel([G0], [-1.0], dim=1), grid, u0=u0, v0=v0,
                   snapshot_steps=range(0, grid.steps + 1, grid.steps // 4))
    for n, snap in res.snapshots.items():
        t = n * grid.dt
        assert snap.max() == pytest.approx(np.exp(-G0 * t / 2), rel=0.05)


def test_energy_conserved_without_memory():
    field = SoundSpeedField.gaussian_lens(1.0, 0.3, 1.0, bbox=BOX)
    grid = SimGrid.from_cfl((81, 81), (-2, -2), (2, 2), 1.0, 0.5, 1.0)
    grid = SimGrid(grid.shape, grid.lower, grid.upper, grid.dt, 1000)
    res = simulate(field, zero_kernel(), grid, u0=_bump(0.5), record_energy=True)
    E = res.energy
    assert np.max(np.abs(E - E[0])) / E[0] <= 1e-3


def _emm_energy(kernel, c, duration=3.0):
    field = SoundSpeedField.homogeneous(c, BOX)
    grid = SimGrid.from_cfl((61, 61), (-2, -2), (2, 2), c, 0.5, duration)
    return grid, simulate(field, kernel, grid, u0=_bump(0.5), record_energy=True).energy


def test_relaxation_sign_kernel_dissipates():
    # G = -d/dt of the relaxation function: energy is non-increasing step by step
    alphas, betas = [-1.0, -3.0], [0.1, 0.2]
    kernel = ExpSumKernel([-a * b for a, b in zip(alphas, betas)], alphas)
    _, E = _emm_energy(kernel, sum(betas))
    assert np.max(np.diff(E)) <= 1e-6 * E[0]
    assert E[-1] < 0.05 * E[0]


def test_emm_kernel_energy_stays_below_continuum_growth():
    # with G = d/dt of the relaxation function the memory term feeds energy in;
    # plane-wave modes grow at most like exp(-G(0) t / (2c))
    alphas, betas = [-1.0, -3.0], [0.1, 0.2]
    c = sum(betas)
    grid, E = _emm_energy(EmmKernel(alphas, betas), c)
    rate = -sum(a * b for a, b in zip(alphas, betas)) / (2 * c)
    t = grid.dt * np.arange(1, len(E) + 1)
    assert np.all(np.isfinite(E))
    assert np.all(E <= E[0] * np.exp(2 * rate * t) * 1.01)
    assert E[-1] > E[0]


def test_mirror_symmetric_receivers():
    field = SoundSpeedField.gaussian_lens(1.0, 0.3, 0.8, bbox=BOX)
    grid = SimGrid.from_cfl((81, 81), (-2, -2), (2, 2), 1.0, 0.5, 2.5)
    src = SourceSpec.gaussian_ricker([0.0, -1.0], 0.1, 6.0)
    res = simulate(field, exponential_kernel(0.3, -1.0), grid, src, receivers=[[-0.6, 0.5], [0.6, 0.5]])
    assert np.max(np.abs(res.traces[:, 0] - res.traces[:, 1])) <= 1e-10 * np.max(np.abs(res.traces))
    assert np.max(np.abs(res.traces)) > 0


def test_interior_kernel_change_is_invisible_before_transit():
    # kernels agree outside r < 0.3; the receiver at distance >= 0.7 from it sees the change late
    field = SoundSpeedField.homogeneous(1.0, BOX)
    grid = SimGrid.from_cfl((101, 101), (-2, -2), (2, 2), 1.0, 0.5, 3.0)
    src = SourceSpec.gaussian_ricker([-1.2, 0.0], 0.08, 6.0)
    inner = lambda x: 0.8 * np.exp(-1.0 / np.maximum(1 - np.sum(x * x, axis=-1) / 0.09, 1e-300)) \
        * (np.sum(x * x, axis=-1) < 0.09)
    k_a = exponential_kernel(0.1, -1.0)
    k_b = ExpSumKernel([0.1, inner], [-1.0, -1.0])
    rec = [[-1.2, 0.8]]
    ta = simulate(field, k_a, grid, src, rec).traces[:, 0]
    tb = simulate(field, k_b, grid, src, rec).traces[:, 0]
    t = grid.times()
    # earliest influence: from the edge of the source support to the ball, then to the receiver
    t0 = src.support[1][0]
    reach = src.support[0][0][1] + 1.2
    arrive = t0 + (np.hypot(1.2, 0.0) - 0.3 - reach) + (np.hypot(1.2, 0.8) - 0.3)
    early = t < arrive - 0.1
    late = t > arrive + 0.3
    assert np.max(np.abs(ta[early] - tb[early])) <= 1e-12
    assert np.max(np.abs(ta[late] - tb[late])) > 1e-8


def test_cfl_violation():
    grid = SimGrid.from_cfl((41, 41), (-2, -2), (2, 2), 1.0, 0.9, 1.0)
    with pytest.raises(CFLViolation):
        simulate(SoundSpeedField.homogeneous(1.0, BOX), zero_kernel(), grid)


def test_source_in_protected_region_rejected():
    grid = SimGrid.from_cfl((41, 41), (-2, -2), (2, 2), 1.0, 0.5, 0.5)
    region = ProtectedRegion(Disc(radius=0.5), 1.0)
    src = SourceSpec.gaussian_ricker([0.2, 0.0], 0.05, 8.0)
    with pytest.raises(DataModelViolation):
        source_to_solution(SoundSpeedField.homogeneous(1.0, BOX), zero_kernel(), grid, region, src, [[1.5, 0]])


def test_source_to_solution_masks_interior_records():
    grid = SimGrid.from_cfl((41, 41), (-2, -2), (2, 2), 1.0, 0.5, 0.5)
    region = ProtectedRegion(Disc(radius=0.5), 1.0)
    src = SourceSpec.gaussian_ricker([-1.4, 0.0], 0.05, 8.0)
    res = source_to_solution(SoundSpeedField.homogeneous(1.0, BOX), zero_kernel(), grid, region, src,
                             [[1.5, 0.0], [0.0, 0.0]])
    assert np.all(np.isnan(res.traces[:, 1]))
    assert np.all(np.isfinite(res.traces[:, 0]))


def test_trace_files_round_trip(tmp_path):
    times = 0.01 * np.arange(5)
    traces = np.arange(10, dtype=float).reshape(5, 2) / 3
    write_traces_binary(tmp_path / "t.bin", times, traces)
    raw = (tmp_path / "t.bin").read_bytes()
    assert raw[:4] == b"VISC"
    assert len(raw) == 32 + traces.size * 8
    t2, tr2 = read_traces_binary(tmp_path / "t.bin")
    np.testing.assert_array_equal(tr2, traces)
    np.testing.assert_allclose(t2, times)
    write_traces_csv(tmp_path / "t.csv", times, traces, header="# x\n")
    t3, tr3 = read_traces_csv(tmp_path / "t.csv")
    np.testing.assert_array_equal(tr3, traces)


def test_bad_binary_rejected(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"NOPE" + bytes(28))
    with pytest.raises(ConfigurationError):
        read_traces_binary(tmp_path / "bad.bin")


def test_run_config_missing_key():
    with pytest.raises(ConfigurationError):
        load_run_config({"field": {"type": "constant", "value": 1.0}})
