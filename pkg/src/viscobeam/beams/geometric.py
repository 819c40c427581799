"""Plane-wave geometrical optics for constant c and an x-independent kernel.

With a Gaussian envelope f and phase t - x.theta/sqrt(c), every spatial
Fourier mode eta of the ansatz reduces to an ODE in t.  Writing
h = (-ik)^{-1}, omega = sqrt(c) eta.theta and rho = c|eta|^2, a mode is

    v(t) = e^{ikt} sum_{l<=N} h^l alpha_l(t) + sum_{m=1}^{N+1} h^m beta_m(t).

The travelling parts alpha_l = e^{lambda0 t} P_l(t) (P_l polynomial) solve the
transport hierarchy obtained by integrating the memory term by parts at
s = t; the stationary parts beta_m solve second-kind Volterra equations with
kernel G/c, which we invert in closed form through the resolvent of an
exponential sum.  Everything stays inside the ``ExpPoly`` algebra, so the
residual of the ansatz is exact and its decay in k can be measured without
quadrature noise.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from ..errors import ArgumentError, UnsupportedConfigurationError
from ..media import MemoryKernel, SoundSpeedField
from .exppoly import ExpPoly, exp_integral_moments
from .quadrature import composite_gauss


def _poly_deriv(p: np.ndarray) -> np.ndarray:
    out = np.zeros_like(p)
    out[..., :-1] = p[..., 1:] * np.arange(1, p.shape[-1])
    return out


def _poly_integral(p: np.ndarray) -> np.ndarray:
    out = np.zeros(p.shape[:-1] + (p.shape[-1] + 1,), dtype=complex)
    out[..., 1:] = p / np.arange(1, p.shape[-1] + 1)
    return out


def _pad_to(p: np.ndarray, n: int) -> np.ndarray:
    if p.shape[-1] >= n:
        return p
    return np.concatenate([p, np.zeros(p.shape[:-1] + (n - p.shape[-1],), dtype=complex)], axis=-1)


def _poly_eval(p: np.ndarray, t: np.ndarray) -> np.ndarray:
    out = np.zeros(p.shape[:-1] + t.shape, dtype=complex)
    for j in range(p.shape[-1] - 1, -1, -1):
        out = out * t + p[..., j, None]
    return out


def kernel_resolvent(weights, rates, c: float) -> ExpPoly:
    """Resolvent R of K = G/c for G = sum_q w_q e^{r_q t}: R = K + K*R, in closed form."""
    w = np.asarray(weights, dtype=float) / c
    r = np.asarray(rates, dtype=float)
    if w.size == 0 or not np.any(w):
        return ExpPoly.zero()
    # poles s solve 1 = sum_q w_q / (s - r_q)
    poly = np.poly1d(np.poly(r))
    for q in range(len(r)):
        others = np.delete(r, q)
        poly = poly - np.poly1d(w[q] * np.poly(others) if len(others) else [w[q]])
    poles = np.roots(poly.coeffs)
    out = ExpPoly.zero()
    for s in poles:
        resid = 1.0 / np.sum(w / (s - r) ** 2)
        out = out + ExpPoly.exponential(complex(s), complex(resid))
    return out


@dataclass
class ModeLadder:
    """Per-mode ladder for a batch of Fourier modes."""
    omega: np.ndarray
    rho: np.ndarray
    lam0: np.ndarray
    travel: list            # P_l arrays, (M, deg+1), l = 0..N
    stationary: list        # beta_m ExpPoly, m = 1..N+1
    order: int

    def travelling(self, k: float, t: np.ndarray) -> np.ndarray:
        h = 1.0 / (-1j * k)
        total = np.zeros(self.omega.shape + t.shape, dtype=complex)
        for l, p in enumerate(self.travel):
            total += h**l * _poly_eval(p, t)
        return total * np.exp(np.multiply.outer(self.lam0, t))

    def stationary_part(self, k: float, t: np.ndarray) -> np.ndarray:
        h = 1.0 / (-1j * k)
        total = np.zeros(self.omega.shape + t.shape, dtype=complex)
        for m, b in enumerate(self.stationary, start=1):
            total += h**m * b(t)
        return total

    def value(self, k: float, t: np.ndarray) -> np.ndarray:
        return np.exp(1j * k * t) * self.travelling(k, t) + self.stationary_part(k, t)


@dataclass
class GeometricOpticsSolution:
    c: float
    direction: np.ndarray
    weights: np.ndarray
    rates: np.ndarray
    order: int
    envelope_width: float
    resolvent: ExpPoly = field(repr=False, default=None)

    # --- construction -----------------------------------------------------
    @property
    def speed(self) -> float:
        return float(np.sqrt(self.c))

    def kernel_expoly(self, derivative: int = 0) -> ExpPoly:
        return ExpPoly({complex(r): [w * r**derivative] for w, r in zip(self.weights, self.rates)})

    def kernel_jet(self, n: int) -> np.ndarray:
        return np.array([np.sum(self.weights * self.rates**i) for i in range(n + 1)])

    def ladder(self, omega, rho) -> ModeLadder:
        omega = np.asarray(omega, dtype=float)
        rho = np.asarray(rho, dtype=float)
        N = self.order
        c = self.c
        jet = self.kernel_jet(N + 2)
        gamma = jet[0] / (2.0 * c)
        lam0 = -1j * omega - gamma
        M = omega.shape

        def D(p):
            return _poly_deriv(p) + lam0[..., None] * p

        def jets_of(p, n):
            out = [p]
            for _ in range(n):
                out.append(D(out[-1]))
            return out

        def g_op(j, pj):
            # sum_i C(j,i) (-1)^i G^{(i)}(0) D^{j-i} P
            n = max(q.shape[-1] for q in pj[: j + 1])
            acc = np.zeros(M + (n,), dtype=complex)
            for i in range(j + 1):
                acc = acc + comb(j, i) * (-1) ** i * jet[i] * _pad_to(pj[j - i], n)
            return acc

        travel = [np.ones(M + (1,), dtype=complex)]
        derivs = [jets_of(travel[0], N + 2)]
        for n in range(1, N + 1):
            rhs = [derivs[n - 1][2], rho[..., None] * derivs[n - 1][0]]
            for j in range(1, n + 1):
                rhs.append(-g_op(j, derivs[n - j]) / c)
            for j in range(0, n):
                rhs.append(-2j * omega[..., None] * g_op(j, derivs[n - 1 - j]) / c)
            for j in range(0, n - 1):
                rhs.append(rho[..., None] * g_op(j, derivs[n - 2 - j]) / c)
            width = max(r.shape[-1] for r in rhs)
            total = sum(_pad_to(r, width) for r in rhs)
            p_n = _poly_integral(0.5 * total)
            travel.append(p_n)
            derivs.append(jets_of(p_n, N + 2))

        # values D^m P_l at t = 0
        at0 = [[d[..., 0] for d in dl] for dl in derivs]
        Gi = [self.kernel_expoly(i) for i in range(N + 2)]

        def F(j, l):
            acc = ExpPoly.zero(M)
            for i in range(j + 1):
                acc = acc + Gi[i].scale(comb(j, i) * (-1) ** i * at0[l][j - i])
            return acc

        R = self.resolvent if self.resolvent is not None else kernel_resolvent(self.weights, self.rates, c)
        W = {0: ExpPoly.zero(M), -1: ExpPoly.zero(M)}
        beta = {0: ExpPoly.zero(M), -1: ExpPoly.zero(M)}
        for n in range(1, N + 2):
            w = beta[n - 2].deriv(2) + W[n - 1].scale(-2j * omega) + W[n - 2].scale(rho)
            for j in range(0, n):
                w = w + F(j, n - 1 - j).scale(1.0 / c)
            for j in range(0, n - 1):
                w = w + F(j, n - 2 - j).scale(2j * omega / c)
            for j in range(0, n - 2):
                w = w + F(j, n - 3 - j).scale(-rho / c)
            W[n] = w
            beta[n] = w + w.convolve(R) if R.terms else w
        return ModeLadder(omega, rho, lam0, travel, [beta[m] for m in range(1, N + 2)], N)

    # --- residual -----------------------------------------------------------
    def mode_residual(self, lad: ModeLadder, k: float, t: np.ndarray) -> np.ndarray:
        """Exact r(t) = v'' + c|kappa|^2 v - |kappa|^2 (G * v) per mode, i.e. (-2P u)^ / f^."""
        c = self.c
        h = 1.0 / (-1j * k)
        mu = 1j * k + lad.lam0                              # exponent of the travelling part
        cp = k * k - 2.0 * k * lad.omega + lad.rho          # c |kappa|^2
        p = cp / c
        # travelling: e^{mu t} [P'' + 2 mu P' + (mu^2 + cp) P] - p * G * (e^{mu t} P)
        P = sum(h**l * _pad_to(q, lad.travel[-1].shape[-1] + 2) for l, q in enumerate(lad.travel))
        P1 = _poly_deriv(P)
        P2 = _poly_deriv(P1)
        mu2cp = 2j * k * lad.lam0 - 2.0 * k * lad.omega + lad.lam0**2 + lad.rho   # mu^2 + cp, k^2 cancelled
        local = _poly_eval(P2 + 2.0 * mu[..., None] * P1 + mu2cp[..., None] * P, t)
        emu = np.exp(np.multiply.outer(mu, t))
        deg = P.shape[-1] - 1
        conv = np.zeros_like(local)
        for w, nu in zip(self.weights, self.rates):
            # int_0^t e^{nu (t-s)} e^{mu s} s^m ds = e^{nu t} J_m(t; mu - nu)
            J = exp_integral_moments(mu - nu, t, deg)
            conv += w * np.einsum("...m,m...t->...t", P, J) * np.exp(nu * t)
        r_trav = emu * local - p[..., None] * conv
        # stationary part
        S = ExpPoly.zero(lad.omega.shape)
        for m, b in enumerate(lad.stationary, start=1):
            S = S + b.scale(h**m)
        G = self.kernel_expoly()
        r_stat = S.deriv(2)(t) + cp[..., None] * S(t)
        if G.terms:
            r_stat = r_stat - p[..., None] * S.convolve(G)(t)
        return r_trav + r_stat

    def residual_norm(self, k: float, T: float, n_hermite: int = 16, panel_nodes: int = 8) -> float:
        """L^2((0,T) x R^2) norm of P u for the envelope f = exp(-|x|^2 / (2 w^2))."""
        w = self.envelope_width
        u, wu = np.polynomial.hermite.hermgauss(n_hermite)
        e_par, e_perp = np.meshgrid(u / w, u / w, indexing="ij")
        weight = (w * w) * np.outer(wu, wu)
        omega = self.speed * e_par
        rho = self.c * (e_par**2 + e_perp**2)
        lad = self.ladder(omega.ravel(), rho.ravel())
        t, tw = composite_gauss(0.0, T, max(4, int(np.ceil(k * T / np.pi))), panel_nodes)
        r = self.mode_residual(lad, k, t)
        per_mode = np.sum(np.abs(r) ** 2 * tw, axis=-1)
        return float(0.5 * np.sqrt(np.sum(weight.ravel() * per_mode)))

    # --- evaluation -----------------------------------------------------------
    def leading_amplitude(self, x: np.ndarray, t: float) -> np.ndarray:
        """a'_0(x, t) = f(x - sqrt(c) theta t) exp(-G(0) t / (2c))."""
        x = np.asarray(x, dtype=float)
        shift = x - self.speed * t * self.direction
        f = np.exp(-np.sum(shift**2, axis=-1) / (2.0 * self.envelope_width**2))
        return f * np.exp(-self.kernel_jet(0)[0] * t / (2.0 * self.c))

    def evaluate_grid(self, k: float, t: float, n: int = 128, half_width: float | None = None):
        """u on an n x n grid via FFT of the envelope; returns (x, y, u) with u[iy, ix]."""
        L = half_width if half_width is not None else 6.0 * self.envelope_width + self.speed * t
        xs = np.linspace(-L, L, n, endpoint=False)
        dx = xs[1] - xs[0]
        X, Y = np.meshgrid(xs, xs)
        f = np.exp(-(X**2 + Y**2) / (2.0 * self.envelope_width**2))
        fh = np.fft.fft2(f)
        kx = 2 * np.pi * np.fft.fftfreq(n, dx)
        KX, KY = np.meshgrid(kx, kx)
        par = KX * self.direction[0] + KY * self.direction[1]
        lad = self.ladder(self.speed * par.ravel(), self.c * (KX**2 + KY**2).ravel())
        v = lad.value(k, np.array([t]))[:, 0].reshape(n, n)
        amp = np.fft.ifft2(fh * v)
        phase = np.exp(-1j * k * (X * self.direction[0] + Y * self.direction[1]) / self.speed)
        return xs, xs, phase * amp


def geometrical_optics_build(field: SoundSpeedField, kernel: MemoryKernel, direction, order: int,
                             envelope_width: float = 1.0) -> GeometricOpticsSolution:
    """Plane-wave GO ladder of order N (residual O(k^-N)) for constant c.

    The kernel must be an x-independent exponential sum.
    """
    if order < 0:
        raise ArgumentError("order must be >= 0")
    if field.constant is None:
        raise UnsupportedConfigurationError(
            "plane-wave geometrical optics needs a homogeneous field; use beams for variable c")
    terms = kernel.exponential_terms(np.zeros(field.dim))
    if terms is None:
        raise UnsupportedConfigurationError("geometrical optics needs an exponential-sum kernel")
    w, r = (np.asarray(v, dtype=float).ravel() for v in terms)
    grad = kernel.spatial_gradient(np.zeros(field.dim), 0.0)
    if np.any(np.abs(grad) > 0):
        raise UnsupportedConfigurationError("geometrical optics needs an x-independent kernel")
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    sol = GeometricOpticsSolution(float(field.constant), d, w, r, order, envelope_width)
    sol.resolvent = kernel_resolvent(w, r, sol.c)
    return sol
