"""Transport hierarchy for beam amplitudes that are constant in z along each ray slice.

With u = int e^{ik phi} sum_l (-ik)^{-l} a_l(s) ds, the memory term is expanded by
repeated integration by parts at the upper limit of the time integral.  At
a ray point this produces a series sum_j k^{1-j} m_j whose coefficients only
involve jets of G at lag 0 and the phase Hessian, so every level reduces to

    da_n/ds = b a_n - 1/2 sum_{j=1}^{n} nu_j a_{n-j},

where b is the damping rate (wave operator on phi plus the memory term with
weight G|grad_x phi|^2 / phi_t) and nu_j are the higher memory coefficients.
The nu_j are evaluated with truncated Taylor series in the lag variable.
The lower-limit (s = 0) terms are collected by the stationary amplitudes
a''_l, which solve second-kind Volterra equations.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import ArgumentError, SingularOperatorError, UnsupportedOrderError
from ..media import MemoryKernel, SoundSpeedField
from ..volterra import TimeGrid, invert_memory_operator_v
from .riccati import RiccatiPath

MAX_LEVEL = 2


@dataclass(frozen=True)
class DampingConvention:
    """b = factor * (box_c phi + G |grad_x phi|^2 / phi_t) on the ray.

    The derived transport equation gives factor = -1/2; other values are kept
    for the convention scan.
    """
    factor: complex = -0.5

    def label(self) -> str:
        f = complex(self.factor)
        return f"{f.real:+g}{f.imag:+g}i"


DERIVED = DampingConvention(-0.5)


def _kernel_jets(kernel: MemoryKernel, x: np.ndarray, order: int) -> np.ndarray:
    """(S, order+1) jets of G at lag 0."""
    return np.moveaxis(np.atleast_2d(kernel.time_jet(x, order)), 0, -1).reshape(len(x), order + 1)


def _kernel_jet_gradients(kernel: MemoryKernel, x: np.ndarray, order: int, h: float = 1e-5) -> np.ndarray:
    """(S, order+1, n) spatial gradients of the lag-0 time jets (central differences)."""
    n = x.shape[-1]
    out = np.empty(x.shape[:1] + (order + 1, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        out[:, :, i] = (_kernel_jets(kernel, x + e, order) - _kernel_jets(kernel, x - e, order)) / (2 * h)
    return out


# truncated Taylor series in u (ascending coefficients, last axis)

def _tmul(a, b):
    L = a.shape[-1]
    out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=complex)
    for i in range(L):
        out[..., i:] += a[..., i:i + 1] * b[..., :L - i]
    return out


def _tinv(a):
    L = a.shape[-1]
    out = np.zeros_like(a, dtype=complex)
    out[..., 0] = 1.0 / a[..., 0]
    for n in range(1, L):
        acc = np.zeros(a.shape[:-1], dtype=complex)
        for i in range(1, n + 1):
            acc += a[..., i] * out[..., n - i]
        out[..., n] = -acc / a[..., 0]
    return out


def _tderiv(a):
    out = np.zeros_like(a)
    out[..., :-1] = a[..., 1:] * np.arange(1, a.shape[-1])
    return out


@dataclass
class RayData:
    """Coefficients sampled along the ray at parameters ``sigma``."""
    sigma: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    tau: np.ndarray
    H: np.ndarray
    c: np.ndarray
    grad_c: np.ndarray
    jets: np.ndarray          # (S, J+1)
    jet_grads: np.ndarray     # (S, J+1, n)

    @property
    def box_phi(self) -> np.ndarray:
        """phi_tt - div(c grad_x phi) on the ray."""
        n = self.x.shape[-1]
        tr = np.trace(self.H[:, :n, :n], axis1=-2, axis2=-1)
        return self.H[:, n, n] - np.sum(self.grad_c * self.xi, axis=-1) - self.c * tr

    @property
    def memory_weight(self) -> np.ndarray:
        """|grad_x phi|^2 / phi_t on the ray."""
        return np.sum(self.xi * self.xi, axis=-1) / self.tau


def ray_data(field_: SoundSpeedField, kernel: MemoryKernel, path: RiccatiPath, sigma, jet_order: int = 3) -> RayData:
    sigma = np.asarray(sigma, dtype=float)
    z, zeta, H = path.state(sigma)
    n = path.dim
    x = z[:, :n]
    return RayData(sigma, x, zeta[:, :n], zeta[:, n], H, field_.value_fn(x), field_.grad_fn(x),
                   _kernel_jets(kernel, x, jet_order), _kernel_jet_gradients(kernel, x, jet_order))


def memory_coefficients(data: RayData, level: int) -> np.ndarray:
    """nu_j for j = 1..level, shape (S, level).

    nu_j = [T^j h2 - T^{j-1} h1] / phi_s at lag 0, with T g = d/du (g / phi_s),
    h2 = G(-u) |grad_x phi|^2 and h1 = grad G(-u) . grad_x phi + G(-u) lap_x phi.
    """
    L = level + 2
    S = len(data.sigma)
    n = data.x.shape[-1]
    Hxt = data.H[:, :n, n]
    Htt = data.H[:, n, n]
    lap = np.trace(data.H[:, :n, :n], axis1=-2, axis2=-1)
    fact = np.cumprod(np.concatenate([[1.0], np.arange(1, L)]))
    sign = (-1.0) ** np.arange(L)
    J = min(L, data.jets.shape[-1])
    g = np.zeros((S, L), dtype=complex)
    g[:, :J] = data.jets[:, :J] * sign[:J] / fact[:J]
    gg = np.zeros((S, L, n), dtype=complex)
    gg[:, :J] = data.jet_grads[:, :J] * (sign[:J] / fact[:J])[None, :, None]
    gradx = np.zeros((S, L, n), dtype=complex)
    gradx[:, 0] = data.xi
    gradx[:, 1] = Hxt
    sq = np.zeros((S, L), dtype=complex)
    sq[:, 0] = np.sum(data.xi * data.xi, axis=-1)
    sq[:, 1] = 2 * np.sum(data.xi * Hxt, axis=-1)
    if L > 2:
        sq[:, 2] = np.sum(Hxt * Hxt, axis=-1)
    phis = np.zeros((S, L), dtype=complex)
    phis[:, 0] = data.tau
    phis[:, 1] = Htt
    inv_phis = _tinv(phis)
    h2 = _tmul(g, sq)
    h1 = sum(_tmul(gg[:, :, i], gradx[:, :, i]) for i in range(n)) + g * lap[:, None]

    def T(a):
        return _tderiv(_tmul(a, inv_phis))

    out = np.zeros((S, level), dtype=complex)
    t2 = h2
    t1 = h1
    for j in range(1, level + 1):
        t2 = T(t2)
        if j > 1:
            t1 = T(t1)
        out[:, j - 1] = (t2[:, 0] - t1[:, 0]) / data.tau
    return out


@dataclass
class TransportLevel:
    level: int
    sigma: np.ndarray
    values: np.ndarray
    dense: object = field(repr=False, default=None)

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return self.dense(s)


@dataclass
class AmplitudeLadder:
    field: SoundSpeedField
    kernel: MemoryKernel
    path: RiccatiPath
    convention: DampingConvention
    launch: complex
    sigma: np.ndarray
    b: np.ndarray
    levels: list                       # TransportLevel for a'_0, a'_1, ...
    stationary: dict = field(default_factory=dict)   # level -> StationaryAmplitude

    @property
    def order(self) -> int:
        return len(self.levels) - 1


def _dense_solution(rhs, span: float, y0, tol: float):
    y0 = np.asarray(y0, dtype=complex)
    m = len(y0)
    sol = solve_ivp(lambda s, y: _split(rhs(s, y[:m] + 1j * y[m:])), (0.0, span),
                    _split(y0), method="DOP853", rtol=tol, atol=tol * 1e-3, dense_output=True)

    def ev(s):
        s = np.asarray(s, dtype=float)
        y = np.asarray(sol.sol(np.clip(s.ravel(), 0.0, span)))
        return (y[:m] + 1j * y[m:]).reshape((m,) + s.shape)

    return ev


def _split(v):
    v = np.asarray(v, dtype=complex)
    return np.concatenate([v.real, v.imag])


def principal_transport(field_: SoundSpeedField, kernel: MemoryKernel, path: RiccatiPath,
                        convention: DampingConvention = DERIVED, launch: complex = 1.0,
                        tol: float = 1e-10, n_samples: int = 401) -> AmplitudeLadder:
    """a'_0(s) = launch * exp(int_0^s b), b = factor * (box_c phi + G |grad phi|^2 / phi_t)."""
    span = path.span
    f = complex(convention.factor)

    def rate(s):
        d = ray_data(field_, kernel, path, np.atleast_1d(s), jet_order=0)
        return f * (d.box_phi + d.jets[:, 0] * d.memory_weight)

    ev = _dense_solution(lambda s, y: rate(s), span, [0.0], tol)
    sig = np.linspace(0.0, span, n_samples)
    b = rate(sig)

    def a0(s):
        return launch * np.exp(ev(s)[0])

    lvl = TransportLevel(0, sig, a0(sig), a0)
    return AmplitudeLadder(field_, kernel, path, convention, complex(launch), sig, b, [lvl])


def higher_transport(level: int, ladder: AmplitudeLadder, tol: float = 1e-10) -> TransportLevel:
    """Solve level ``level`` (launch value 0) given all lower levels; appends to the ladder."""
    if level < 1:
        raise ArgumentError("level must be >= 1; use principal_transport for level 0")
    if level > MAX_LEVEL:
        raise UnsupportedOrderError(f"transport levels above {MAX_LEVEL} are not implemented")
    while ladder.order < level - 1:
        higher_transport(ladder.order + 1, ladder, tol)
    if ladder.order >= level:
        return ladder.levels[level]
    span = ladder.path.span
    fld, ker, path = ladder.field, ladder.kernel, ladder.path

    def nu(s):
        d = ray_data(fld, ker, path, np.atleast_1d(s), jet_order=level + 1)
        return memory_coefficients(d, level)[0]

    # ratios r_n = a_n / a_0 satisfy dr_n/ds = -1/2 sum_j nu_j r_{n-j}, r_0 = 1
    def rhs(s, r):
        v = nu(s)
        full = np.concatenate([[1.0], r])
        out = np.zeros(level, dtype=complex)
        for n in range(1, level + 1):
            out[n - 1] = -0.5 * sum(v[j - 1] * full[n - j] for j in range(1, n + 1))
        return out

    ev = _dense_solution(rhs, span, np.zeros(level), tol)
    a0 = ladder.levels[0]

    def a_l(s, _lv=level):
        return a0(s) * ev(s)[_lv - 1]

    lvl = TransportLevel(level, ladder.sigma, a_l(ladder.sigma), a_l)
    ladder.levels.append(lvl)
    return lvl


@dataclass
class StationaryAmplitude:
    """a''_l(t, s) at the ray point x(s), sampled on a time grid for each s node."""
    level: int
    times: np.ndarray
    sigma: np.ndarray
    values: np.ndarray        # (len(sigma), len(times))

    def __call__(self, t, s_index) -> np.ndarray:
        v = self.values[s_index]
        return np.interp(t, self.times, v.real) + 1j * np.interp(t, self.times, v.imag)


def amplitude_corrections(ladder: AmplitudeLadder, sigma_nodes, t_end: float, n_steps: int = 400,
                          level: int = 0) -> StationaryAmplitude:
    """Solve V a''_0 = 1/2 |grad_x phi(0)|^2 G(x, t) a'_0(s) / phi_t(x, 0, s) at x = x(s).

    V w = 1/2 c |grad_x phi(0)|^2 w - 1/2 int_0^t G(t - r) |grad_x phi(0)|^2 w(r) dr; the
    phase of the stationary term does not depend on r, so the weight is constant.
    """
    if level != 0:
        raise UnsupportedOrderError("stationary corrections are implemented for level 0 only")
    sigma_nodes = np.atleast_1d(np.asarray(sigma_nodes, dtype=float))
    grid = TimeGrid(0.0, t_end, n_steps)
    times = grid.times
    vals = np.zeros((len(sigma_nodes), len(times)), dtype=complex)
    z, zeta, H = ladder.path.state(sigma_nodes)
    n = ladder.path.dim
    a0 = ladder.levels[0](sigma_nodes)
    if ladder.kernel.is_zero:
        return StationaryAmplitude(0, times, sigma_nodes, vals)
    for i, s in enumerate(sigma_nodes):
        x = z[i, :n]
        dt0 = np.zeros(n + 1)
        dt0[n] = -z[i, n]                  # (x(s), 0) - z(s)
        grad = zeta[i] + H[i] @ dt0
        weight = complex(np.sum(grad[:n] * grad[:n]))
        phit = complex(grad[n])
        c = float(ladder.field.value_fn(x))
        lead = 0.5 * c * weight
        if lead == 0 or phit == 0:
            raise SingularOperatorError("leading coefficient of V vanishes")
        G = np.asarray(ladder.kernel.G(np.broadcast_to(x, (len(times), n)), times), dtype=float)
        rhs = 0.5 * weight * G * a0[i] / phit
        # with a real weight, V acts separately on real and imaginary parts
        if weight.imag == 0:
            re = invert_memory_operator_v(G, weight.real, rhs.real, grid, lead.real)
            im = invert_memory_operator_v(G, weight.real, rhs.imag, grid, lead.real)
            vals[i] = re + 1j * im
        else:
            vals[i] = _invert_complex(G, weight, rhs, grid, lead)
    return StationaryAmplitude(0, times, sigma_nodes, vals)


def _invert_complex(G, weight, rhs, grid: TimeGrid, lead):
    """Complex-weight version of the V inversion (same trapezoid forward substitution)."""
    dt = grid.dt
    n = len(rhs)
    w = np.empty(n, dtype=complex)
    K = 0.5 * G * weight / lead
    f = rhs / lead
    w[0] = f[0]
    for i in range(1, n):
        hist = 0.5 * K[i] * w[0] + (np.dot(K[i - 1:0:-1], w[1:i]) if i > 1 else 0.0)
        w[i] = (f[i] + dt * hist) / (1.0 - 0.5 * dt * K[0])
    return w


def build_ladder(field_: SoundSpeedField, kernel: MemoryKernel, path: RiccatiPath, order: int = 0,
                 convention: DampingConvention = DERIVED, launch: complex = 1.0) -> AmplitudeLadder:
    ladder = principal_transport(field_, kernel, path, convention, launch)
    for lv in range(1, order + 1):
        higher_transport(lv, ladder)
    return ladder
