"""The eleven end-to-end acceptance checks.

Each check returns a CriterionResult; ``passed`` requires both the numerical
threshold and the wall-clock limit.  ``run_all`` is what ``viscobeam verify``
and tests/test_acceptance.py call.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .beams.geometric import geometrical_optics_build
from .beams.quasimode import (assemble_quasimode, beam_residual, fitted_slope, residual_grid,
                              stationary_phase_value)
from .beams.riccati import riccati_closed_form, solve_riccati
from .beams.setups import LensBeamConfig, ProbeSetup, classify_beam_family
from .emm import hankel_determinant_check, magic_formula_residual, recover_parameters
from .fdtd import SimGrid, SourceSpec, simulate
from .media import ExpSumKernel, SoundSpeedField, emm_moments, exponential_kernel, zero_kernel
from .probe import pick_arrival
from .rays import Disc, PhasePoint, lens_data
from .volterra import ConvolutionKernel, TimeGrid, resolvent_kernel, solve_second_kind
from .xray import (PixelGrid, beam_line_data, build_chords, forward_matrix, forward_transform,
                   invert_transform, recover_kernel_order0, recover_kernel_order1, relative_error)

KS = (20.0, 40.0, 80.0, 160.0)


@dataclass
class CriterionResult:
    id: int
    name: str
    passed: bool
    detail: str
    metrics: dict = field(default_factory=dict)
    elapsed: float = 0.0
    limit: float = np.inf

    def line(self) -> str:
        return (f"{'PASS' if self.passed else 'FAIL'} [{self.id:2d}] {self.name}: {self.detail} "
                f"({self.elapsed:.1f}s / {self.limit:.0f}s)")


def _timed(cid: int, name: str, limit: float, fn: Callable[[], tuple[bool, str, dict]]) -> CriterionResult:
    t0 = time.perf_counter()
    ok, detail, metrics = fn()
    el = time.perf_counter() - t0
    if el > limit:
        detail += f"; runtime {el:.1f}s exceeds {limit:.0f}s"
    return CriterionResult(cid, name, bool(ok and el <= limit), detail, metrics, el, limit)


# 1 ---------------------------------------------------------------------------

def _go_rate():
    fld = SoundSpeedField.homogeneous(1.0)
    ker = exponential_kernel(0.5, -1.0)
    slopes = {}
    norms = {}
    for order in (1, 2):
        sol = geometrical_optics_build(fld, ker, [1.0, 0.0], order)
        vals = [sol.residual_norm(k, T=2.0) for k in KS]
        norms[order] = vals
        slopes[order] = fitted_slope(KS, vals)
    ok = slopes[1] <= -0.9 and slopes[2] <= -1.9
    return ok, f"slopes N=1 {slopes[1]:.3f} (<= -0.9), N=2 {slopes[2]:.3f} (<= -1.9)", \
        {"slopes": slopes, "norms": norms}


def check_go_rate() -> CriterionResult:
    return _timed(1, "GO residual rate", 120, _go_rate)


# 2 ---------------------------------------------------------------------------

def _beam_rate():
    cfg = LensBeamConfig(order=1)
    phase, ladder, kernel = cfg.build()
    lead, full, stat = [], [], []
    for k in cfg.ks:
        h = 1.0 / (-1j * k)
        qm = assemble_quasimode(phase, ladder, k)
        grid = residual_grid(phase, k, cfg.t_range)
        sets = [lambda s: ladder.levels[0](s),
                lambda s, h=h: ladder.levels[0](s) + h * ladder.levels[1](s)]
        res = beam_residual(qm, kernel, grid, sets)
        lead.append(res.norms[0])
        full.append(res.norms[1])
        stat.append(res.stationary_bound)
    s0 = fitted_slope(cfg.ks, lead)
    s1 = fitted_slope(cfg.ks, full)
    ok = s0 <= -0.5 and s1 < s0
    detail = (f"slope a'0 {s0:.3f} (<= -0.5), with a'1 and a''0 {s1:.3f} "
              f"(must be < {s0:.3f}); a''0 reach into the window <= {max(stat):.1e}")
    return ok, detail, {"norms_a0": lead, "norms_a1": full, "slope_a0": s0, "slope_a1": s1,
                        "stationary_bound": stat}


def check_beam_rate() -> CriterionResult:
    return _timed(2, "Beam residual rate", 300, _beam_rate)


# 3 ---------------------------------------------------------------------------

def random_complex_symmetric(rng: np.random.Generator, m: int = 3) -> np.ndarray:
    """Complex symmetric matrix with positive definite imaginary part."""
    B = rng.normal(size=(m, m))
    M = rng.normal(size=(m, m))
    return 0.15 * (B + B.T) + 1j * (M @ M.T + 0.5 * np.eye(m))


def _riccati(seed: int = 7):
    rng = np.random.default_rng(seed)
    mins = []
    for _ in range(100):
        fld = SoundSpeedField.gaussian_lens(1.0, rng.uniform(-0.3, 0.3), rng.uniform(0.5, 1.5),
                                            bbox=((-6.0, 6.0), (-6.0, 6.0)))
        x0 = np.array([rng.uniform(-3.0, -2.0), rng.uniform(-1.5, 1.5)])
        th = rng.uniform(-0.4, 0.4)
        start = PhasePoint.null_from_direction(fld, x0, [np.cos(th), np.sin(th)])
        path = solve_riccati(fld, start, random_complex_symmetric(rng), span=4.0)
        mins.append(float(path.imag_spectrum()[:, 0].min()))
    fld = SoundSpeedField.homogeneous(2.0, bbox=((-6.0, 6.0), (-6.0, 6.0)))
    start = PhasePoint.null_from_direction(fld, [-2.0, 0.0], [1.0, 0.0])
    H0 = random_complex_symmetric(rng)
    path = solve_riccati(fld, start, H0, span=4.0)
    err = float(np.max(np.abs(path.H - riccati_closed_form(H0, 2.0, path.sigma))))
    ok = min(mins) > 0 and err <= 1e-8
    return ok, f"min eig Im H {min(mins):.3e} (> 0), closed-form error {err:.2e} (<= 1e-8)", \
        {"min_eigs": mins, "closed_form_error": err}


def check_riccati() -> CriterionResult:
    return _timed(3, "Riccati positivity and closed form", 30, _riccati)


# 4 ---------------------------------------------------------------------------

def _volterra(lam: float = 1.0):
    errs = {}
    for dt in (2e-3, 1e-3):
        g = TimeGrid(0.0, 1.0, int(round(1.0 / dt)))
        t = g.times
        u = solve_second_kind(ConvolutionKernel.constant(lam), 1.0, g)
        R = resolvent_kernel(ConvolutionKernel.constant(lam), g, tol=1e-14)
        errs[dt] = (float(np.max(np.abs(u - np.exp(lam * t)))),
                    float(np.max(np.abs(R - lam * np.exp(lam * t)))))
    e_sol, e_res = errs[1e-3]
    ratio = errs[2e-3][0] / e_sol
    ratio_r = errs[2e-3][1] / e_res
    ok = e_sol <= 1e-5 and e_res <= 1e-5 and 3.5 <= ratio <= 4.5 and 3.5 <= ratio_r <= 4.5
    return ok, (f"solution error {e_sol:.2e}, resolvent error {e_res:.2e} (<= 1e-5); "
                f"halving ratios {ratio:.3f}, {ratio_r:.3f} (in [3.5, 4.5])"), \
        {"errors": errs, "ratio_solution": ratio, "ratio_resolvent": ratio_r}


def check_volterra() -> CriterionResult:
    return _timed(4, "Volterra analytics", 10, _volterra)


# 5 ---------------------------------------------------------------------------

def _stationary(s0: float = 7.0, ks=(40.0, 80.0, 160.0)):
    cfg = LensBeamConfig(order=0)
    phase, ladder, _ = cfg.build()
    z = phase.path.state(np.array([s0]))[0]
    devs = []
    for k in ks:
        qm = assemble_quasimode(phase, ladder, k)
        u = qm.evaluate(z)[0]
        approx = stationary_phase_value(qm, s0)
        devs.append(float(abs(u - approx) / abs(approx)))
    ratios = [devs[i + 1] / devs[i] for i in range(len(devs) - 1)]
    ok = all(0.3 <= r <= 0.7 for r in ratios)
    return ok, f"deviations {', '.join(f'{d:.2e}' for d in devs)}; ratios {', '.join(f'{r:.3f}' for r in ratios)} " \
               "(in [0.3, 0.7])", {"deviations": devs, "ratios": ratios}


def check_stationary_phase() -> CriterionResult:
    return _timed(5, "Stationary phase", 60, _stationary)


# 6 ---------------------------------------------------------------------------

def _lens():
    disc = Disc()
    fld = SoundSpeedField.homogeneous(4.0, bbox=((-1.5, 1.5), (-1.5, 1.5)))
    rec_closed = lens_data(fld, disc, [-1.0, 0.0], [1.0, 0.0])
    rec_num = lens_data(fld, disc, [-1.0, 0.0], [1.0, 0.0], numeric=True)
    t_ray = rec_num.travel_time
    grid = SimGrid.from_cfl((400, 400), (-1.5, -1.5), (1.5, 1.5), 4.0, 0.5, 1.5)
    src = SourceSpec.gaussian_ricker((-1.3, 0.0), 0.03, 12.0)
    run = simulate(fld, None, grid, src, receivers=[(-1.0, 0.0), (1.0, 0.0)])
    arrivals = [pick_arrival(run.traces[:, i], 0.2, run.times) for i in range(2)]
    t_fd = arrivals[1] - arrivals[0]
    rel = abs(t_fd - t_ray) / t_ray
    ok = abs(t_ray - 1.0) <= 1e-6 and abs(rec_closed.travel_time - 1.0) <= 1e-6 and rel <= 0.03
    return ok, (f"ray travel time {t_ray:.9f} (1 +- 1e-6), FDTD arrival difference {t_fd:.4f} "
                f"(relative {rel:.2%}, <= 3%)"), \
        {"ray_time": t_ray, "closed_time": rec_closed.travel_time, "fdtd_time": t_fd, "arrivals": arrivals}


def check_lens() -> CriterionResult:
    return _timed(6, "Lens data (rays and FDTD)", 180, _lens)


# 7 ---------------------------------------------------------------------------

def _probe(setup: ProbeSetup = ProbeSetup()):
    res, meta, cell = classify_beam_family(LensBeamConfig(order=0), setup)
    mags, exps, flagged = res.magnitudes, res.exponents, res.flagged
    dist = np.array([abs(m[0]) for m in meta])
    ang = np.array([m[1] for m in meta])
    on_ray = (dist == 0) & (ang == 0)
    orth = ang == np.pi / 2
    ratio = float(mags[on_ray, -1][0] / max(mags[orth, -1].max(), 1e-300))
    tube_ok = bool(np.all(flagged[on_ray]) and np.all(dist[flagged] <= 2 * cell) and np.all(ang[flagged] == 0))
    orth_ok = not bool(np.any(flagged[orth]))
    ok = tube_ok and orth_ok and ratio >= 1e3
    spread = float(dist[flagged].max() / cell) if flagged.any() else 0.0
    detail = (f"on-ray exponent {exps[on_ray][0]:.2f}, flagged {int(flagged.sum())} points, spread "
              f"{spread:.2f} cells (<= 2, aligned only); orthogonal max exponent {exps[orth].max():.2f} "
              f"(none flagged); k=64 ratio {ratio:.2e} (>= 1e3)")
    if not tube_ok:
        detail = "tube flags misplaced: " + detail
    return ok, detail, {"exponents": exps.tolist(), "magnitudes": mags.tolist(), "meta": meta,
                        "cell": cell, "ratio": ratio}


def check_probe() -> CriterionResult:
    return _timed(7, "Propagation of singularities (probe)", 180, _probe)


# 8, 9 -------------------------------------------------------------------------

def _xray_setup(n_pixels: int = 64):
    fld = SoundSpeedField.homogeneous(1.0)
    disc = Disc()
    chords = build_chords(fld, disc, 180, 64)
    grid = PixelGrid.covering(disc, n_pixels)
    return fld, disc, chords, grid, forward_matrix(chords, grid)


def _xray_roundtrip():
    fld, _, chords, grid, A = _xray_setup()

    def phantom(x):
        return np.exp(-4.0 * np.sum(x ** 2, axis=-1))
    sino = forward_transform(phantom, chords, fld)
    rec = invert_transform(sino, grid, 1e-4, A)
    err = relative_error(rec, phantom(grid.centers()))
    ok = err <= 0.05 and rec.residual <= 0.02
    return ok, f"field error {err:.2%} (<= 5%), sinogram residual {rec.residual:.2e} (<= 2%)", \
        {"error": err, "residual": rec.residual, "iterations": rec.iterations}


def check_xray() -> CriterionResult:
    return _timed(8, "X-ray round trip", 120, _xray_roundtrip)


def _kernel_recovery(lam: float = 1e-4):
    fld, _, chords, grid, A = _xray_setup()
    x0 = np.array([0.2, -0.1])

    def bump(x):
        return np.exp(-8.0 * np.sum((np.asarray(x) - x0) ** 2, axis=-1))

    def neg_bump(x):
        return -bump(x)
    truth = bump(grid.centers())
    # order 0: G(x, t) = bump(x) e^{-t}
    d0 = beam_line_data(fld, ExpSumKernel([bump], [-1.0]), chords, level=0)
    r0 = recover_kernel_order0(d0.log_ratio, fld, d0.geometric, grid, lam, A)
    e0 = relative_error(r0, truth)
    # order 1: G(., 0) = 0, d_t G(., 0) = bump
    d1 = beam_line_data(fld, ExpSumKernel([bump, neg_bump], [-1.0, -2.0]), chords, level=1)
    r1_0 = recover_kernel_order0(d1.log_ratio, fld, d1.geometric, grid, lam, A)
    r1 = recover_kernel_order1(d1.ratio1, r1_0, fld, grid, lam, A=A)
    e1 = relative_error(r1, truth)
    # order 1 with both jets nonzero: G = bump e^{-1.5 t}, so d_t G(., 0) = -1.5 bump
    d2 = beam_line_data(fld, ExpSumKernel([bump], [-1.5]), chords, level=1)
    r2_0 = recover_kernel_order0(d2.log_ratio, fld, d2.geometric, grid, lam, A)
    r2 = recover_kernel_order1(d2.ratio1, r2_0, fld, grid, lam, A=A)
    e2 = relative_error(r2, -1.5 * truth)
    # zero kernel
    dz = beam_line_data(fld, zero_kernel(2), chords, level=1)
    z0 = recover_kernel_order0(dz.log_ratio, fld, dz.geometric, grid, lam, A)
    z1 = recover_kernel_order1(dz.ratio1, z0, fld, grid, lam, A=A)
    floor = float(max(np.nanmax(np.abs(z0.values)), np.nanmax(np.abs(z1.values))))
    data_floor = float(max(np.max(np.abs(dz.log_ratio.values - dz.geometric.values)),
                             np.max(np.abs(dz.ratio1.values))))
    # Tikhonov is linear, so the recovered zero kernel is bounded by the data floor times ||A^+||
    ok = e0 <= 0.10 and e1 <= 0.15 and e2 <= 0.15 and floor <= 1e-8
    return ok, (f"order-0 error {e0:.2%} (<= 10%), order-1 error {e1:.2%} / {e2:.2%} "
                f"with G(., 0) zero / nonzero (<= 15%), "
                f"zero-kernel max {floor:.1e} (data floor {data_floor:.1e})"), \
        {"order0": e0, "order1": e1, "order1_coupled": e2, "zero_floor": floor, "zero_data": data_floor,
         "order1_leak_at_zero_G0": float(np.nanmax(np.abs(r1_0.values)))}


def check_kernel_recovery() -> CriterionResult:
    return _timed(9, "Kernel recovery orders 0 and 1", 300, _kernel_recovery)


# 10 --------------------------------------------------------------------------

def random_emm(rng: np.random.Generator, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Well-separated negative alphas and positive betas."""
    gaps = rng.uniform(0.3, 1.0, n)
    alphas = -np.cumsum(gaps)[::-1]
    betas = rng.uniform(0.5, 2.0, n)
    return alphas, betas


def _emm(seed: int = 11):
    rng = np.random.default_rng(seed)
    round_trip = 0.0
    for n in range(1, 5):
        for _ in range(5):
            a, b = random_emm(rng, n)
            fit = recover_parameters(emm_moments(a, b, 2 * n))
            round_trip = max(round_trip, float(np.max(np.abs(fit.alphas - a) / np.abs(a))),
                             float(np.max(np.abs(fit.betas - b) / np.abs(b))))
    det = 0.0
    for n in range(1, 6):
        for _ in range(5):
            a, b = random_emm(rng, n)
            num, formula = hankel_determinant_check(a, b)
            det = max(det, abs(num - formula) / abs(formula))
    lemma = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 5))
        a = rng.uniform(-5.0, -0.5, n)
        b = rng.uniform(0.5, 2.0, n)
        lemma = max(lemma, magic_formula_residual(a, b, int(rng.integers(0, 4))))
    ok = round_trip <= 1e-6 and det <= 1e-8 and lemma <= 1e-10
    return ok, (f"round trip {round_trip:.1e} (<= 1e-6), determinant identity {det:.1e} (<= 1e-8), "
                f"moment recursion residual {lemma:.1e} (<= 1e-10)"), \
        {"round_trip": round_trip, "determinant": det, "recursion": lemma}


def check_emm() -> CriterionResult:
    return _timed(10, "EMM recovery", 10, _emm)


# 11 --------------------------------------------------------------------------

def smooth_bump(radius: float, center=(0.0, 0.0)):
    """C-infinity bump exp(-1/(1 - r^2/R^2)) supported in the disc of the given radius."""
    c = np.asarray(center, dtype=float)

    def fn(x):
        r2 = np.sum((np.asarray(x) - c) ** 2, axis=-1) / radius ** 2
        return np.where(r2 < 1, np.exp(-1.0 / np.maximum(1.0 - r2, 1e-300)), 0.0)
    return fn


def _fdtd_integrity(cone_margin: float = 0.2):
    box = ((-2.0, 2.0), (-2.0, 2.0))
    fld = SoundSpeedField.homogeneous(1.0, bbox=box)
    ker = exponential_kernel(0.5, -1.0)
    grid = SimGrid.from_cfl((101, 101), (-2.0, -2.0), (2.0, 2.0), 1.0, 0.5, 1.0)
    rec = [(0.5, 0.3), (-0.7, 0.2), (1.2, -1.0)]
    # zero source, zero data
    zero = simulate(fld, ker, grid, None, receivers=rec)
    zero_max = float(max(np.max(np.abs(zero.state.u)), np.max(np.abs(zero.traces))))
    # energy drift with G = 0
    e_grid = SimGrid((101, 101), (-2.0, -2.0), (2.0, 2.0), grid.dt, 1000)
    run = simulate(fld, None, e_grid, u0=smooth_bump(0.5), record_energy=True)
    drift = float(np.max(np.abs(run.energy - run.energy[0])) / run.energy[0])
    # linearity in f
    s1 = SourceSpec.gaussian_ricker((0.3, -0.2), 0.1, 4.0)
    s2 = SourceSpec.gaussian_ricker((-0.4, 0.5), 0.08, 5.0, delay=0.4)
    box = tuple((min(a[0], b[0]), max(a[1], b[1])) for a, b in zip(s1.support[0], s2.support[0]))
    span = (min(s1.support[1][0], s2.support[1][0]), max(s1.support[1][1], s2.support[1][1]))
    both = SourceSpec(lambda x, t: 2.5 * s1.fn(x, t) - 0.75 * s2.fn(x, t), (box, span), "combination")
    r1 = simulate(fld, ker, grid, s1, receivers=rec)
    r2 = simulate(fld, ker, grid, s2, receivers=rec)
    rb = simulate(fld, ker, grid, both, receivers=rec)
    lin = rb.state.u - (2.5 * r1.state.u - 0.75 * r2.state.u)
    lin_err = float(np.max(np.abs(lin)) / np.max(np.abs(rb.state.u)))
    # finite speed: compact data of radius 0.5 with memory on
    cone_grid = SimGrid.from_cfl((201, 201), (-2.0, -2.0), (2.0, 2.0), 1.0, 0.5, 1.0)
    cr = simulate(fld, ker, cone_grid, u0=smooth_bump(0.5))
    T = cone_grid.steps * cone_grid.dt
    nodes = cone_grid.nodes()
    dist = np.linalg.norm(nodes, axis=-1)
    u = cr.state.u
    outside = dist > 0.5 + np.sqrt(fld.constant) * T + cone_margin
    cone = float(np.max(np.abs(u[outside])) / np.max(np.abs(u)))
    # the stencil reaches one cell per step; beyond that the field is exactly zero
    reach = np.sum(np.abs(nodes), axis=-1) > 0.5 * np.sqrt(2) + cone_grid.steps * cone_grid.spacing[0] + 1e-9
    discrete = float(np.max(np.abs(u[reach]))) if reach.any() else 0.0
    ok = zero_max == 0.0 and drift <= 1e-3 and lin_err <= 1e-10 and cone <= 1e-8 and discrete == 0.0
    return ok, (f"zero run max {zero_max:.1e}, energy drift {drift:.1e} (<= 1e-3), linearity {lin_err:.1e} "
                f"(<= 1e-10), outside cone {cone:.1e} (<= 1e-8, margin {cone_margin}), "
                f"beyond stencil reach {discrete:.1e}"), \
        {"zero": zero_max, "drift": drift, "linearity": lin_err, "cone": cone, "stencil_reach": discrete}


def check_fdtd_integrity() -> CriterionResult:
    return _timed(11, "FDTD integrity", 120, _fdtd_integrity)


CHECKS = {
    1: check_go_rate,
    2: check_beam_rate,
    3: check_riccati,
    4: check_volterra,
    5: check_stationary_phase,
    6: check_lens,
    7: check_probe,
    8: check_xray,
    9: check_kernel_recovery,
    10: check_emm,
    11: check_fdtd_integrity,
}


def run_all(ids=None, echo: Callable[[str], None] | None = None) -> list[CriterionResult]:
    out = []
    for cid in (ids or sorted(CHECKS)):
        res = CHECKS[cid]()
        if echo:
            echo(res.line())
        out.append(res)
    return out
