"""Complex quadratic beam phase along a null bicharacteristic.

The phase is phi(z, s) = zeta(s).(z - z(s)) + 1/2 H(s)(z - z(s)).(z - z(s)),
and the eikonal condition q(z, grad phi) + d_s phi = O(|z - z(s)|^3) forces

    dH/ds = -D - H B - B^T H - H C H,

with D = q_zz, C = q_{zeta zeta} and B[j, l] = d^2 q / dz_l dzeta_j, all taken
on the ray.  Coordinates are ordered (x_1, ..., x_n, t).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ..errors import ArgumentError, IntegrationError, PreconditionError, RiccatiBlowupError
from ..media import SoundSpeedField
from ..rays import Bicharacteristic, PhasePoint


def symbol_blocks(field_: SoundSpeedField, x, xi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """B, C, D of q = (tau^2 - c|xi|^2)/2 at a phase-space point (tau is irrelevant)."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n = len(x)
    c = float(field_.value_fn(x))
    g = field_.grad_fn(x)
    hs = field_.hess_fn(x)
    B = np.zeros((n + 1, n + 1))
    B[:n, :n] = -np.outer(xi, g)
    C = np.diag(np.append(np.full(n, -c), 1.0))
    D = np.zeros((n + 1, n + 1))
    D[:n, :n] = -0.5 * float(xi @ xi) * hs
    return B, C, D


def _joint_rhs(field_: SoundSpeedField):
    n = field_.dim
    m = n + 1

    def rhs(_s, y):
        x = y[:n]
        xi = y[n + 1:2 * n + 1]
        tau = y[2 * n + 1]
        c = field_.value_fn(x)
        g = field_.grad_fn(x)
        hs = field_.hess_fn(x)
        xi2 = xi @ xi
        H = (y[2 * m:2 * m + m * m] + 1j * y[2 * m + m * m:]).reshape(m, m)
        out = np.empty_like(y)
        out[:n] = -c * xi
        out[n] = tau
        out[n + 1:2 * n + 1] = 0.5 * xi2 * g
        out[2 * n + 1] = 0.0
        # -D - H B - B^T H - H C H with the block structure spelled out
        HB = np.zeros((m, m), dtype=complex)
        HB[:, :n] = -np.outer(H[:, :n] @ xi, g)
        Cd = np.append(np.full(n, -c), 1.0)
        dH = -(HB + HB.T) - (H * Cd[None, :]) @ H
        dH[:n, :n] += 0.5 * xi2 * hs
        out[2 * m:2 * m + m * m] = dH.real.ravel()
        out[2 * m + m * m:] = dH.imag.ravel()
        return out

    return rhs


@dataclass
class RiccatiPath:
    """Ray samples with the phase Hessian; ``dense`` interpolates the joint state."""
    sigma: np.ndarray
    z: np.ndarray
    zeta: np.ndarray
    H: np.ndarray
    dim: int
    dense: object = field(repr=False, default=None)
    closed_form: object = field(repr=False, default=None)

    @property
    def span(self) -> float:
        return float(self.sigma[-1])

    def state(self, s) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(z, zeta, H) at flow parameters s; shapes s.shape + (m,), (m,), (m, m)."""
        s = np.asarray(s, dtype=float)
        if self.closed_form is not None:
            return self.closed_form(s)
        m = self.dim + 1
        y = np.moveaxis(np.asarray(self.dense(s.ravel())), 0, -1)
        z = y[:, :m]
        zeta = y[:, m:2 * m]
        H = (y[:, 2 * m:2 * m + m * m] + 1j * y[:, 2 * m + m * m:]).reshape(-1, m, m)
        return (z.reshape(s.shape + (m,)), zeta.reshape(s.shape + (m,)),
                H.reshape(s.shape + (m, m)))

    def imag_spectrum(self, s=None) -> np.ndarray:
        """Eigenvalues of Im H (symmetrized) at the samples or at s."""
        H = self.H if s is None else self.state(s)[2]
        im = 0.5 * (H.imag + np.swapaxes(H.imag, -1, -2))
        return np.linalg.eigvalsh(im)

    def symmetry_defect(self) -> float:
        return float(np.max(np.abs(self.H - np.swapaxes(self.H, -1, -2))))


def _check_h0(H0: np.ndarray, m: int) -> np.ndarray:
    H0 = np.asarray(H0, dtype=complex)
    if H0.shape != (m, m):
        raise ArgumentError(f"H0 must be {m}x{m}")
    if np.max(np.abs(H0 - H0.T)) > 1e-12 * (1 + np.max(np.abs(H0))):
        raise PreconditionError("H0 must be complex symmetric")
    if np.min(np.linalg.eigvalsh(0.5 * (H0.imag + H0.imag.T))) <= 0:
        raise PreconditionError("Im H0 must be positive definite")
    return 0.5 * (H0 + H0.T)


def solve_riccati(field_: SoundSpeedField, ray: Bicharacteristic | PhasePoint, H0, span: float | None = None,
                  tol: float = 1e-11, n_samples: int = 201, check_points: int = 801) -> RiccatiPath:
    """Integrate the ray and H jointly (DOP853) from the ray's start over its span."""
    if isinstance(ray, Bicharacteristic):
        start_z, start_zeta = ray.z[0], ray.zeta[0]
        span = ray.span if span is None else span
    else:
        start_z, start_zeta = ray.z, ray.zeta
        if span is None:
            raise ArgumentError("span is required when starting from a phase point")
    n = field_.dim
    m = n + 1
    H0 = _check_h0(H0, m)
    y0 = np.concatenate([start_z, start_zeta, H0.real.ravel(), H0.imag.ravel()])
    sol = solve_ivp(_joint_rhs(field_), (0.0, span), y0, method="DOP853", rtol=tol, atol=tol * 1e-2,
                    dense_output=True)
    if sol.status < 0:
        raise IntegrationError(sol.message)
    sig = np.linspace(0.0, span, n_samples)
    path = RiccatiPath(sig, None, None, None, n, sol.sol)
    path.z, path.zeta, path.H = path.state(sig)
    check = np.linspace(0.0, span, check_points)
    lam = path.imag_spectrum(check)[:, 0]
    if np.any(~np.isfinite(lam)) or np.any(lam <= 0):
        bad = int(np.argmax(~(lam > 0)))
        raise RiccatiBlowupError("Im H lost positivity", float(check[bad]))
    return path


def riccati_closed_form(H0, c: float, sigma) -> np.ndarray:
    """H(s) = (H0^{-1} + s C)^{-1} for constant c, C = diag(-c, ..., -c, 1)."""
    H0 = np.asarray(H0, dtype=complex)
    m = H0.shape[0]
    Cd = np.append(np.full(m - 1, -float(c)), 1.0)
    inv0 = np.linalg.inv(H0)
    s = np.asarray(sigma, dtype=float)
    return np.linalg.inv(inv0 + s[..., None, None] * np.diag(Cd))


def homogeneous_path(field_: SoundSpeedField, start: PhasePoint, H0, span: float,
                     n_samples: int = 201) -> RiccatiPath:
    """Closed-form path for a constant speed (straight ray, explicit H)."""
    if field_.constant is None:
        raise ArgumentError("closed-form path needs a homogeneous field")
    c = float(field_.constant)
    m = field_.dim + 1
    H0 = _check_h0(H0, m)
    z0 = np.asarray(start.z, dtype=float)
    zeta0 = np.asarray(start.zeta, dtype=float)
    vel = np.append(-c * zeta0[:-1], zeta0[-1])

    def cf(s):
        s = np.asarray(s, dtype=float)
        z = z0 + s[..., None] * vel
        zeta = np.broadcast_to(zeta0, s.shape + (m,)).copy()
        return z, zeta, riccati_closed_form(H0, c, s)

    sig = np.linspace(0.0, span, n_samples)
    path = RiccatiPath(sig, None, None, None, field_.dim, None, cf)
    path.z, path.zeta, path.H = cf(sig)
    return path


@dataclass
class BeamPhase:
    path: RiccatiPath
    field: SoundSpeedField

    def evaluate(self, z, s) -> np.ndarray:
        """phi(z, s) for points z (..., m) against parameters s (S,) -> (..., S)."""
        z = np.asarray(z, dtype=float)
        zs, zeta, H = self.path.state(np.atleast_1d(s))
        d = z[..., None, :] - zs
        return np.einsum("...sj,sj->...s", d, zeta) + 0.5 * np.einsum("...sj,sjl,...sl->...s", d, H, d)

    def gradient(self, z, s) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        zs, zeta, H = self.path.state(np.atleast_1d(s))
        d = z[..., None, :] - zs
        return zeta + np.einsum("sjl,...sl->...sj", H, d)

    def eikonal_defect(self, z, s, ds: float = 1e-5) -> np.ndarray:
        """q(z, grad phi) + d_s phi, which is O(|z - z(s)|^3) for a correct H."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        grad = self.gradient(z, s)
        n = self.field.dim
        c = self.field.value_fn(np.asarray(z)[..., :n])
        q = 0.5 * (grad[..., n] ** 2 - c[..., None] * np.sum(grad[..., :n] ** 2, axis=-1))
        dphi = (self.evaluate(z, s + ds) - self.evaluate(z, s - ds)) / (2 * ds)
        return q + dphi

    def gaussian_bounds(self) -> tuple[float, float]:
        """(c0, r0) with Im phi(z, s) >= c0 |z - z(s)|^2; r0 is unlimited for a quadratic phase."""
        lam = self.path.imag_spectrum()[:, 0]
        return float(0.5 * np.min(lam)), float("inf")
