"""Assembled beam quasimodes, their residual under P and the stationary-phase value.

    u(x, t) = sum_l (-ik)^{-l} int_0^T eta (e^{ik phi(z, s)} a'_l(s)
                                            + (-ik)^{-1} e^{ik phi((x, 0), s)} a''_l(t, s)) ds

The s-integral uses a composite Gauss-Legendre rule whose panels resolve the
O(k^{-1/2}) stationary-phase width.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import (ArgumentError, DegeneracyError, PreconditionError,
                      UnsupportedConfigurationError)
from ..media import MemoryKernel, SoundSpeedField
from .ladder import AmplitudeLadder, StationaryAmplitude, amplitude_corrections
from .quadrature import composite_gauss
from .riccati import BeamPhase


def smooth_cutoff(r: np.ndarray) -> np.ndarray:
    """C-infinity bump in r: 1 on [0, 1], 0 beyond 2."""
    r = np.asarray(r, dtype=float)
    a = np.clip(2.0 - r, 0.0, None)
    b = np.clip(r - 1.0, 0.0, None)
    with np.errstate(divide="ignore"):
        fa = np.where(a > 0, np.exp(-1.0 / np.where(a > 0, a, 1.0)), 0.0)
        fb = np.where(b > 0, np.exp(-1.0 / np.where(b > 0, b, 1.0)), 0.0)
    return fa / (fa + fb)


def _velocity(zeta: np.ndarray, c: np.ndarray) -> np.ndarray:
    n = zeta.shape[-1] - 1
    v = np.empty_like(zeta)
    v[..., :n] = -c[..., None] * zeta[..., :n]
    v[..., n] = zeta[..., n]
    return v


def sigma_width(phase: BeamPhase, k: float, samples: int = 401) -> float:
    """Width 1/sqrt(k min Im(H zdot.zdot)) of the s-integrand around its stationary point."""
    s = np.linspace(0.0, phase.path.span, samples)
    z, zeta, H = phase.path.state(s)
    n = phase.path.dim
    v = _velocity(zeta, phase.field.value_fn(z[:, :n]))
    curv = np.einsum("si,sij,sj->s", v, H, v).imag
    return float(1.0 / np.sqrt(k * np.min(curv)))


@dataclass
class BeamQuasimode:
    phase: BeamPhase
    ladder: AmplitudeLadder
    k: float
    sigma: np.ndarray
    weights: np.ndarray
    cutoff_radius: float
    levels: int = 0
    stationary: StationaryAmplitude | None = None
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def h(self) -> complex:
        return 1.0 / (-1j * self.k)

    def amplitude(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        total = np.zeros(s.shape, dtype=complex)
        for l in range(self.levels + 1):
            total = total + self.h**l * self.ladder.levels[l](s)
        return total

    def _nodes(self):
        if "nodes" not in self._cache:
            z, zeta, H = self.phase.path.state(self.sigma)
            self._cache["nodes"] = (z, zeta, H, self.amplitude(self.sigma))
        return self._cache["nodes"]

    def evaluate(self, points, chunk: int = 512, negligible: float = 40.0) -> np.ndarray:
        """u at space-time points (..., n+1).

        Nodes whose Gaussian factor is below e^{-negligible} on a whole chunk
        (by the bound Im phi >= lambda_min(Im H) |z - z(s)|^2 / 2) are skipped.
        """
        pts = np.asarray(points, dtype=float)
        shape = pts.shape[:-1]
        pts = pts.reshape(-1, pts.shape[-1])
        z, zeta, H, A = self._nodes()
        if "lam" not in self._cache:
            self._cache["lam"] = self.phase.path.imag_spectrum(self.sigma)[:, 0]
        lam = self._cache["lam"]
        n = self.phase.path.dim
        out = np.zeros(len(pts), dtype=complex)
        wA = self.weights * A
        for i in range(0, len(pts), chunk):
            p = pts[i:i + chunk]
            mid = 0.5 * (p.min(axis=0) + p.max(axis=0))
            rad = 0.5 * np.linalg.norm(p.max(axis=0) - p.min(axis=0))
            gap = np.maximum(np.linalg.norm(z - mid, axis=-1) - rad, 0.0)
            keep = 0.5 * self.k * lam * gap**2 < negligible
            if self.stationary is None and not np.any(keep):
                continue
            zk, zetak, Hk = z[keep], zeta[keep], H[keep]
            d = p[:, None, :] - zk[None]
            phi = np.einsum("psj,sj->ps", d, zetak) + 0.5 * np.einsum("psj,sjl,psl->ps", d, Hk, d)
            eta = smooth_cutoff(np.linalg.norm(d, axis=-1) / self.cutoff_radius)
            out[i:i + chunk] = np.sum(wA[keep] * eta * np.exp(1j * self.k * phi), axis=-1)
            if self.stationary is not None:
                p0 = p.copy()
                p0[:, n] = 0.0
                d0 = p0[:, None, :] - z[None]
                phi0 = np.einsum("psj,sj->ps", d0, zeta) + 0.5 * np.einsum("psj,sjl,psl->ps", d0, H, d0)
                eta0 = smooth_cutoff(np.linalg.norm(d0, axis=-1) / self.cutoff_radius)
                st = self.stationary
                vals = np.stack([st(p[:, n], j) for j in range(len(self.sigma))], axis=-1)
                out[i:i + chunk] += self.h * np.sum(self.weights * eta0 * np.exp(1j * self.k * phi0) * vals,
                                                    axis=-1)
        return out.reshape(shape)


def assemble_quasimode(phase: BeamPhase, ladder: AmplitudeLadder, k: float, levels: int | None = None,
                       nodes_per_panel: int = 8, k_min: float | None = None,
                       stationary: bool = False, t_end: float | None = None) -> BeamQuasimode:
    """Quasimode from a phase and amplitude ladder at frequency k.

    The s-rule has at least 8 sqrt(k) nodes and panels no wider than the
    stationary-phase width.  The cutoff radius is 4 / sqrt(k_min min eig Im H).
    """
    if k <= 0:
        raise ArgumentError("k must be positive")
    levels = ladder.order if levels is None else levels
    if levels > ladder.order:
        raise ArgumentError(f"ladder only has levels up to {ladder.order}")
    T = phase.path.span
    width = sigma_width(phase, k)
    panels = max(int(np.ceil(8 * np.sqrt(k) / nodes_per_panel)), int(np.ceil(T / width)))
    s, w = composite_gauss(0.0, T, panels, nodes_per_panel)
    lam = float(np.min(phase.path.imag_spectrum()[:, 0]))
    kk = k if k_min is None else k_min
    radius = 4.0 / np.sqrt(lam * kk)
    st = None
    if stationary:
        st = amplitude_corrections(ladder, s, t_end if t_end is not None else T)
    return BeamQuasimode(phase, ladder, float(k), s, w, float(radius), levels, st)


# residual ---------------------------------------------------------------------

@dataclass
class ResidualGrid:
    """Space box x time samples on which the residual is measured.

    ``points`` (P, n) is a uniform box around the ray segment; ``times`` are
    aligned with the edges of the memory-quadrature panels.
    """
    points: np.ndarray
    cell_area: float
    times: np.ndarray
    time_weights: np.ndarray
    s_start: float
    s_panel: float
    window_s: float
    spatial_width: float


def residual_grid(phase: BeamPhase, k: float, t_range, spacing: float = 0.5, extent: float = 3.5) -> ResidualGrid:
    """Box covering the ray for t in t_range plus ``extent`` beam widths; spacing in widths."""
    ta, tb = map(float, t_range)
    if not 0.0 <= ta < tb <= phase.path.span:
        raise ArgumentError("t_range must lie inside [0, T]")
    n = phase.path.dim
    s = np.linspace(ta, tb, 101)
    z, zeta, H = phase.path.state(s)
    lam = np.min(np.linalg.eigvalsh(H[:, :n, :n].imag))
    w = 1.0 / np.sqrt(k * lam)
    x = z[:, :n]
    along = x[-1] - x[0]
    e1 = along / np.linalg.norm(along)
    e2 = np.array([-e1[1], e1[0]])
    a = (x - x[0]) @ e1
    b = (x - x[0]) @ e2
    h = spacing * w
    av = np.arange(a.min() - extent * w, a.max() + extent * w + h / 2, h)
    bv = np.arange(b.min() - extent * w, b.max() + extent * w + h / 2, h)
    A, B = np.meshgrid(av, bv, indexing="ij")
    pts = x[0] + A.reshape(-1, 1) * e1 + B.reshape(-1, 1) * e2
    c_min = float(np.min(phase.field.value_fn(pts)))
    # times: spacing comparable to the spatial one, memory panels of <= one wavelength
    n_t = max(3, int(np.ceil((tb - ta) / (h / np.sqrt(c_min)))) + 1)
    times = np.linspace(ta, tb, n_t)
    dt = times[1] - times[0]
    q = max(1, int(np.ceil(dt * k / (2 * np.pi))))
    hs = dt / q
    window = (extent + 4.0) * w / np.sqrt(c_min)
    pre = int(np.ceil((window + extent * w) / hs))
    s_start = max(0.0, ta - pre * hs)
    s_start = ta - np.floor((ta - s_start) / hs + 1e-9) * hs
    tw = np.full(n_t, dt)
    tw[0] = tw[-1] = dt / 2
    return ResidualGrid(pts, h * h, times, tw, float(s_start), float(hs), float(window), float(w))


def _exp_kernel_data(kernel: MemoryKernel, x: np.ndarray, h: float = 1e-5):
    if kernel.is_zero:
        return np.zeros((len(x), 0)), np.zeros(0), np.zeros((len(x), 0, x.shape[-1]))
    terms = kernel.exponential_terms(x)
    if terms is None:
        raise UnsupportedConfigurationError("beam residuals need an exponential-sum kernel")
    w, r = terms
    if np.ptp(r, axis=0).max(initial=0.0) > 1e-12:
        raise UnsupportedConfigurationError("beam residuals need spatially constant kernel rates")
    n = x.shape[-1]
    gw = np.empty(w.shape + (n,))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        gw[..., i] = (kernel.exponential_terms(x + e)[0] - kernel.exponential_terms(x - e)[0]) / (2 * h)
    return w, r[0], gw


@dataclass
class ResidualResult:
    norms: list                 # one per amplitude set
    raw_norms: list             # without endpoint subtraction
    stationary_bound: float     # max of k e^{-k Im phi((x,0), s)} over the box
    launch_bound: float
    fields: np.ndarray | None = None   # (sets, points, times) when requested


def _window_index(center, half, step, count, n_panels):
    lo = np.floor((center - half) / step).astype(int)
    return np.clip(lo, 0, max(0, n_panels - count))


def beam_residual(qm: BeamQuasimode, kernel: MemoryKernel, grid: ResidualGrid, amplitude_sets=None,
                  subtract_endpoints: bool = True, chunk: int = 6, nodes: int = 8,
                  sigma_window: float = 6.0, check: bool = True,
                  launch_tolerance: float = 1e-6, keep_fields: bool = False) -> ResidualResult:
    """Discrete L^2 norm of P u over grid.times x grid.points for each amplitude set.

    ``amplitude_sets`` is a list of callables s -> A(s) (defaults to the
    quasimode amplitude).  The wave part is differentiated analytically; the
    memory integral uses Gauss panels of at most one wavelength in s, and the
    s-integral of the ansatz uses panels of one stationary-phase width.
    """
    phase = qm.phase
    fld = phase.field
    path = phase.path
    k = qm.k
    n = path.dim
    T = path.span
    if amplitude_sets is None:
        amplitude_sets = [qm.amplitude]
    nA = len(amplitude_sets)

    # global s-rule for the ansatz integral
    wsig = sigma_width(phase, k)
    hsig = wsig
    n_sp = int(np.ceil(T / hsig))
    hsig = T / n_sp
    sg, sw = composite_gauss(0.0, T, n_sp, nodes)
    zS, zetaS, HS = path.state(sg)
    AS = np.stack([f(sg) for f in amplitude_sets])          # (nA, S)
    lapS = np.trace(HS[:, :n, :n], axis1=-2, axis2=-1)
    win_panels = min(n_sp, int(np.ceil(2 * sigma_window * wsig / hsig)) + 2)

    pts = grid.points
    P = len(pts)
    cP = fld.value_fn(pts)
    gcP = fld.grad_fn(pts)
    wq, rq, gwq = _exp_kernel_data(kernel, pts)
    # s* = parameter of the nearest ray point
    table = np.linspace(0.0, T, 2001)
    zt = path.state(table)[0][:, :n]
    sstar = table[np.argmin(np.sum((pts[:, None, :] - zt[None]) ** 2, axis=-1), axis=1)]

    # launch-side bounds (stationary terms and the s = 0 endpoint)
    stat_bound = 0.0
    launch_bound = 0.0
    if check:
        early = sg[sg <= 0.25 * T]
        ze, zee, He = path.state(early)
        for i in range(0, P, 256):
            p0 = np.concatenate([pts[i:i + 256], np.zeros((len(pts[i:i + 256]), 1))], axis=1)
            d = p0[:, None, :] - ze[None]
            im = (np.einsum("psj,sj->ps", d, zee) + 0.5 * np.einsum("psj,sjl,psl->ps", d, He, d)).imag
            stat_bound = max(stat_bound, float(k * np.exp(-k * im.min())))
        zt0 = np.concatenate([np.repeat(pts, 1, 0), np.full((P, 1), grid.times[0])], axis=1)
        d = zt0 - zS[0]
        im = (d @ zetaS[0] + 0.5 * np.einsum("pj,jl,pl->p", d, HS[0], d)).imag
        launch_bound = float(k * np.exp(-k * im.min()))
        if stat_bound > launch_tolerance or launch_bound > launch_tolerance:
            raise PreconditionError(
                f"residual grid overlaps the launch neighbourhood (bounds {stat_bound:.2e}, {launch_bound:.2e}); "
                "move t_range away from s = 0")

    # memory quadrature in s
    hs = grid.s_panel
    n_spanels = int(round((grid.times[-1] - grid.s_start) / hs))
    win_s = min(n_spanels, int(np.ceil(2 * grid.window_s / hs)) + 1)
    gl, glw = np.polynomial.legendre.leggauss(nodes)
    gl = 0.5 * hs * (gl + 1.0)
    glw = 0.5 * hs * glw

    times = grid.times
    nt = len(times)
    Pu = np.zeros((nA, P, nt), dtype=complex)
    ik = 1j * k

    def sums(x, s, need_wave, cx=None, gcx=None):
        """s-integral sums at points x (m, n) and times s (m, q): returns grad u, lap u, wave part."""
        m, q = s.shape
        center = 0.5 * (s + sstar_chunk[:, None])
        lo = _window_index(center, sigma_window * wsig + 0.5 * hsig, hsig, win_panels, n_sp)
        idx = (lo[..., None] * nodes + np.arange(win_panels * nodes)).clip(0, len(sg) - 1)   # (m, q, W)
        zz = zS[idx]
        d = np.concatenate([np.broadcast_to(x[:, None, None, :], (m, q, 1, n)),
                            s[:, :, None, None]], axis=-1) - zz
        Hd = np.einsum("mqwjl,mqwl->mqwj", HS[idx], d)
        grad = zetaS[idx] + Hd
        phi = np.einsum("mqwj,mqwj->mqw", d, zetaS[idx]) + 0.5 * np.einsum("mqwj,mqwj->mqw", d, Hd)
        E = sw[idx] * np.exp(ik * phi)
        gx = grad[..., :n]
        gx2 = np.einsum("mqwj,mqwj->mqw", gx, gx)
        lap_part = ik * lapS[idx] - k * k * gx2
        out_grad = np.einsum("amqw,mqw,mqwj->amqj", AS[:, idx], E, gx) * ik
        out_lap = np.einsum("amqw,mqw->amq", AS[:, idx], E * lap_part)
        wave = None
        if need_wave:
            gt = grad[..., n]
            dens = (-k * k * (gt * gt - cx[:, None, None] * gx2)
                    + ik * (HS[idx][..., n, n] - np.einsum("mj,mqwj->mqw", gcx, gx) - cx[:, None, None] * lapS[idx]))
            wave = np.einsum("amqw,mqw->amq", AS[:, idx], E * dens)
        return out_grad, out_lap, wave

    for i in range(0, P, chunk):
        sl = slice(i, min(P, i + chunk))
        x = pts[sl]
        m = len(x)
        sstar_chunk = sstar[sl]
        # wave part at the grid times
        tt = np.broadcast_to(times, (m, nt))
        _, _, wave = sums(x, tt, True, cP[sl], gcP[sl])
        total = wave
        # memory part
        if wq.shape[-1]:
            j0 = _window_index(sstar_chunk - grid.s_start, grid.window_s, hs, win_s, n_spanels)
            panel_left = grid.s_start + (j0[:, None] + np.arange(win_s)) * hs          # (m, win)
            snodes = (panel_left[:, :, None] + gl).reshape(m, -1)                      # (m, q)
            sweights = np.broadcast_to(np.tile(glw, win_s), snodes.shape)
            g_u, l_u, _ = sums(x, snodes, False)
            # F_q(s) = e^{-r_q s} (grad w_q . grad u + w_q lap u)
            F = (np.einsum("mqj,amsj->amsq", gwq[sl], g_u) + wq[sl][None, :, None, :] * l_u[..., None])
            F = F * np.exp(-np.outer(snodes.ravel(), rq)).reshape(m, -1, len(rq))[None]
            F = F * sweights[None, :, :, None]
            mask = (snodes[:, None, :] < times[None, :, None] - 1e-12)                    # (m, nt, q)
            acc = np.einsum("mtq,amqr->amtr", mask.astype(float), F)
            mem = np.einsum("amtr,tr->amt", acc, np.exp(np.outer(times, rq)))
            total = total + mem
        Pu[:, sl, :] = -0.5 * total

    raw = Pu.copy()
    if subtract_endpoints:
        A0 = np.stack([f(np.array([0.0]))[0] for f in amplitude_sets])
        AT = np.stack([f(np.array([T]))[0] for f in amplitude_sets])
        zt = np.concatenate([np.repeat(pts[:, None, :], nt, 1), np.broadcast_to(times[None, :, None], (P, nt, 1))],
                            axis=-1)
        ends = []
        for s_end in (0, -1):
            d = zt - zS[s_end] if s_end == 0 else zt - path.state(np.array([T]))[0][0]
            zeta_e, H_e = (zetaS[0], HS[0]) if s_end == 0 else (path.state(np.array([T]))[1][0],
                                                                 path.state(np.array([T]))[2][0])
            ph = d @ zeta_e + 0.5 * np.einsum("ptj,jl,ptl->pt", d, H_e, d)
            ends.append(np.exp(ik * ph))
        Pu = Pu - ik * (AT[:, None, None] * ends[1][None] - A0[:, None, None] * ends[0][None])
    wts = grid.cell_area * grid.time_weights
    norms = [float(np.sqrt(np.sum(np.abs(Pu[a]) ** 2 * wts[None, :]))) for a in range(nA)]
    raws = [float(np.sqrt(np.sum(np.abs(raw[a]) ** 2 * wts[None, :]))) for a in range(nA)]
    return ResidualResult(norms, raws, stat_bound, launch_bound, Pu if keep_fields else None)


def residual_norm(qm: BeamQuasimode, field_: SoundSpeedField, kernel: MemoryKernel, grid: ResidualGrid,
                  subtract_endpoints: bool = True) -> float:
    """L^2 norm of P u on the grid; the s-endpoint terms ik[e^{ik phi} a]_0^T are removed exactly."""
    if field_ is not qm.phase.field:
        raise ArgumentError("quasimode was built on a different field")
    if all(not np.any(lv.values) for lv in qm.ladder.levels[: qm.levels + 1]):
        return 0.0
    return beam_residual(qm, kernel, grid, subtract_endpoints=subtract_endpoints).norms[0]


# stationary phase ---------------------------------------------------------------

def phase_second_derivative(phase: BeamPhase, s0: float) -> complex:
    """d^2/ds^2 phi(z(s0), s) at s = s0, equal to H zdot.zdot - zetadot.zdot."""
    n = phase.path.dim
    z, zeta, H = phase.path.state(np.array([s0]))
    z, zeta, H = z[0], zeta[0], H[0]
    x = z[:n]
    c = float(phase.field.value_fn(x))
    g = phase.field.grad_fn(x)
    v = np.append(-c * zeta[:n], zeta[n])
    zeta_dot = np.append(0.5 * float(zeta[:n] @ zeta[:n]) * g, 0.0)
    return complex(v @ H @ v - zeta_dot @ v)


def stationary_phase_value(qm: BeamQuasimode, s0: float, k: float | None = None) -> complex:
    """Leading term k^{-1/2} (2 pi i / phi'')^{1/2} a'_0(s0) of u at z(s0) (principal branch)."""
    T = qm.phase.path.span
    if not 0.1 * T <= s0 <= 0.9 * T:
        raise ArgumentError("s0 must keep a distance of at least 0.1 T from both endpoints")
    k = qm.k if k is None else k
    d2 = phase_second_derivative(qm.phase, s0)
    if d2.imag <= 0 or abs(d2) < 1e-14:
        raise DegeneracyError(f"second s-derivative of the phase is degenerate: {d2}")
    a0 = complex(qm.ladder.levels[0](np.array([s0]))[0])
    return complex(np.sqrt(2j * np.pi / d2) / np.sqrt(k) * a0)


# scans ----------------------------------------------------------------------------

def fitted_slope(ks, values) -> float:
    """Least-squares slope of log(values) against log(ks)."""
    ks = np.asarray(ks, dtype=float)
    values = np.asarray(values, dtype=float)
    if np.any(values <= 0):
        raise DegeneracyError("log-log fit needs positive values")
    return float(np.polyfit(np.log(ks), np.log(values), 1)[0])


def convention_scan(phase: BeamPhase, kernel: MemoryKernel, k: float, t_range, candidates=None,
                    launch_tolerance: float = 1e-6) -> dict:
    """Residual of the a'_0 beam for each candidate damping convention; returns {label: norm}."""
    from .ladder import DampingConvention, build_ladder
    if candidates is None:
        candidates = [s * u * m for s in (1, -1) for u in (1, 1j) for m in (0.5, 1.0)]
    grid = residual_grid(phase, k, t_range)
    out = {}
    for factor in candidates:
        conv = DampingConvention(complex(factor))
        lad = build_ladder(phase.field, kernel, phase.path, order=0, convention=conv)
        qm = assemble_quasimode(phase, lad, k, levels=0)
        out[conv.label()] = beam_residual(qm, kernel, grid, launch_tolerance=launch_tolerance).norms[0]
    return out


def beam_summary(ladder: AmplitudeLadder, samples: int = 101) -> dict:
    """JSON-ready dict with ray samples, Im H spectra and the a'_0 profile."""
    path = ladder.path
    s = np.linspace(0.0, path.span, samples)
    z, zeta, _ = path.state(s)
    spec = path.imag_spectrum(s)
    a0 = ladder.levels[0](s)
    return {
        "sigma": s.tolist(),
        "z": z.tolist(),
        "zeta": zeta.tolist(),
        "imag_spectrum": spec.tolist(),
        "a0_real": a0.real.tolist(),
        "a0_imag": a0.imag.tolist(),
        "convention": ladder.convention.label(),
        "order": ladder.order,
    }
