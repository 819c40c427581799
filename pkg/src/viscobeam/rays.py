"""Null bicharacteristics of q(z, zeta) = (tau^2 - c(x)|xi|^2)/2 and lens data.

Along the flow dz/ds = dq/dzeta, dzeta/ds = -dq/dz we get
    dx/ds = -c xi,  dt/ds = tau,  dxi/ds = |xi|^2 grad(c)/2,  dtau/ds = 0,
so with tau = 1 the flow parameter is time and the spatial speed on null
rays is sqrt(c).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import RK45, solve_ivp

from .errors import ArgumentError, DomainError, IntegrationError, PreconditionError, TrappedRayError
from .media import SoundSpeedField


@dataclass(frozen=True)
class PhasePoint:
    x: np.ndarray
    t: float
    xi: np.ndarray
    tau: float = 1.0

    @property
    def z(self) -> np.ndarray:
        return np.append(self.x, self.t)

    @property
    def zeta(self) -> np.ndarray:
        return np.append(self.xi, self.tau)

    @classmethod
    def null_from_direction(cls, field: SoundSpeedField, x, direction, t: float = 0.0) -> "PhasePoint":
        """Null covector with tau = 1 whose ray moves along ``direction``."""
        x = np.asarray(x, dtype=float)
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        c = float(field.value(x))
        return cls(x, float(t), -d / np.sqrt(c), 1.0)


def hamiltonian(field: SoundSpeedField, p: PhasePoint) -> float:
    c = float(field.value(p.x))
    return 0.5 * (p.tau**2 - c * float(np.dot(p.xi, p.xi)))


def _rhs_factory(field: SoundSpeedField, with_arc: bool = False):
    d = field.dim

    def rhs(_s, y):
        x = y[:d]
        xi = y[d + 1:2 * d + 1]
        tau = y[2 * d + 1]
        c = field.value_fn(x)
        g = field.grad_fn(x)
        xi2 = xi @ xi
        out = np.empty_like(y)
        out[:d] = -c * xi
        out[d] = tau
        out[d + 1:2 * d + 1] = 0.5 * xi2 * g
        out[2 * d + 1] = 0.0
        if with_arc:
            out[2 * d + 2] = c * np.sqrt(xi2)
        return out

    return rhs


@dataclass
class Bicharacteristic:
    sigma: np.ndarray          # (m,)
    z: np.ndarray              # (m, d+1): x then t
    zeta: np.ndarray           # (m, d+1): xi then tau
    truncated: bool
    dense: object = field(repr=False, default=None)
    dim: int = 2

    @property
    def span(self) -> float:
        return float(self.sigma[-1] - self.sigma[0])

    def at(self, s) -> tuple[np.ndarray, np.ndarray]:
        """Interpolated (z, zeta) at flow parameter(s) s."""
        y = np.asarray(self.dense(np.asarray(s, dtype=float)))
        d = self.dim
        y = np.moveaxis(y, 0, -1)
        return y[..., :d + 1], y[..., d + 1:2 * d + 2]

    def hamiltonian_drift(self, field: SoundSpeedField) -> float:
        d = self.dim
        c = field.value_fn(self.z[:, :d])
        xi = self.zeta[:, :d]
        q = 0.5 * (self.zeta[:, d] ** 2 - c * np.sum(xi * xi, axis=1))
        return float(np.max(np.abs(q)))


def trace_bicharacteristic(field: SoundSpeedField, start: PhasePoint, span: float,
                           tol: float = 1e-9, method: str = "RK45") -> Bicharacteristic:
    if span <= 0:
        raise ArgumentError("span must be positive")
    if abs(hamiltonian(field, start)) > 1e-10 * (1 + float(np.dot(start.zeta, start.zeta))):
        raise PreconditionError("start point is not on the null set")
    d = field.dim
    y0 = np.concatenate([start.x, [start.t], start.xi, [start.tau]])
    lo, hi = field.lower, field.upper

    def leave(_s, y):
        x = y[:d]
        return float(np.min(np.concatenate([x - lo, hi - x])))

    leave.terminal = True
    leave.direction = -1
    sol = solve_ivp(_rhs_factory(field), (0.0, span), y0, method=method, rtol=tol, atol=tol * 1e-2,
                    dense_output=True, events=leave)
    if sol.status < 0:
        raise IntegrationError(sol.message)
    truncated = sol.status == 1
    y = sol.y.T
    return Bicharacteristic(sol.t, y[:, :d + 1], y[:, d + 1:], truncated, sol.sol, d)


# domains and lens data -----------------------------------------------------------

@dataclass(frozen=True)
class Disc:
    center: tuple = (0.0, 0.0)
    radius: float = 1.0

    def level(self, x) -> np.ndarray:
        r = np.asarray(x, dtype=float) - np.asarray(self.center)
        return np.sum(r * r, axis=-1) - self.radius**2

    @property
    def diameter(self) -> float:
        return 2.0 * self.radius

    def outward_normal(self, x) -> np.ndarray:
        r = np.asarray(x, dtype=float) - np.asarray(self.center)
        return r / np.linalg.norm(r, axis=-1, keepdims=True)

    def chord_exit(self, x, d) -> np.ndarray:
        """Distance along unit d from x (inside or on the circle) to the far intersection."""
        r = np.asarray(x, dtype=float) - np.asarray(self.center)
        b = np.sum(r * d, axis=-1)
        cc = np.sum(r * r, axis=-1) - self.radius**2
        return -b + np.sqrt(np.maximum(b * b - cc, 0.0))


@dataclass(frozen=True)
class LensRecord:
    entry: PhasePoint
    exit: PhasePoint
    travel_time: float
    arc_length: float
    entry_direction: np.ndarray
    exit_direction: np.ndarray

    def row(self) -> list[float]:
        return [*self.entry.x, *self.entry_direction, *self.exit.x, *self.exit_direction, self.travel_time]


LENS_COLUMNS = ["entry_x", "entry_y", "entry_dir_x", "entry_dir_y",
                "exit_x", "exit_y", "exit_dir_x", "exit_dir_y", "travel_time"]


def _bisect(fn, a: float, b: float, tol: float) -> float:
    fa = fn(a)
    for _ in range(200):
        if b - a <= tol:
            break
        m = 0.5 * (a + b)
        fm = fn(m)
        if (fm > 0) == (fa > 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def lens_data(field: SoundSpeedField, domain: Disc, entry, direction, tol: float = 1e-9,
              numeric: bool | None = None, c_min: float | None = None) -> LensRecord:
    """Trace the null ray entering at ``entry`` along ``direction`` until it leaves ``domain``.

    Homogeneous fields use the straight chord in closed form unless
    ``numeric=True``.
    """
    x0 = np.asarray(entry, dtype=float)
    d0 = np.asarray(direction, dtype=float)
    d0 = d0 / np.linalg.norm(d0)
    if abs(domain.level(x0)) > 1e-8 * max(1.0, domain.radius**2):
        raise PreconditionError("entry point is not on the boundary")
    if np.dot(d0, domain.outward_normal(x0)) >= 0:
        raise PreconditionError("entry direction is not inward")
    start = PhasePoint.null_from_direction(field, x0, d0)
    if numeric is None:
        numeric = field.constant is None
    if not numeric:
        c = field.constant
        length = float(domain.chord_exit(x0, d0))
        x1 = x0 + length * d0
        tt = length / np.sqrt(c)
        exit_pt = PhasePoint(x1, tt, start.xi.copy(), 1.0)
        return LensRecord(start, exit_pt, tt, length, d0, d0.copy())

    if c_min is None:
        c_min = field.sample_min(41)
    cap = 10.0 * domain.diameter / np.sqrt(c_min)
    dim = field.dim
    y0 = np.concatenate([start.x, [0.0], start.xi, [1.0], [0.0]])
    solver = RK45(_rhs_factory(field, with_arc=True), 0.0, y0, cap, rtol=tol, atol=tol * 1e-2)
    inside = False
    while True:
        s_old, y_old = solver.t, solver.y.copy()
        msg = solver.step()
        if solver.status == "failed":
            raise IntegrationError(msg or "step failed")
        lev = domain.level(solver.y[:dim])
        if lev < 0:
            inside = True
        elif inside:
            dense = solver.dense_output()
            s_exit = _bisect(lambda s: domain.level(dense(s)[:dim]), s_old, solver.t, 1e-12)
            y = dense(s_exit)
            break
        if solver.status == "finished":
            raise TrappedRayError(f"ray still inside after sigma cap {cap:.3g}")
        if not inside and solver.t > 0.5 * cap:
            raise TrappedRayError("ray never entered the domain")
    x1 = y[:dim]
    xi1 = y[dim + 1:2 * dim + 1]
    vel = -float(field.value(x1)) * xi1
    exit_pt = PhasePoint(x1, float(y[dim]), xi1, 1.0)
    return LensRecord(start, exit_pt, float(s_exit), float(y[-1]), d0, vel / np.linalg.norm(vel))


def chord_family(domain: Disc, n_angles: int, n_offsets: int) -> tuple[np.ndarray, np.ndarray]:
    """Parallel-beam chords: angles k*pi/n_angles, offsets at cell midpoints across the disc.

    Returns (entries, directions), each (n_angles * n_offsets, 2), angle-major.
    """
    if n_angles < 1 or n_offsets < 1:
        raise ArgumentError("counts must be >= 1")
    R = domain.radius
    theta = np.pi * np.arange(n_angles) / n_angles
    p = R * (-1.0 + (2.0 * np.arange(n_offsets) + 1.0) / n_offsets)
    th, pp = np.meshgrid(theta, p, indexing="ij")
    th, pp = th.ravel(), pp.ravel()
    d = np.stack([np.cos(th), np.sin(th)], axis=1)
    nrm = np.stack([-np.sin(th), np.cos(th)], axis=1)
    half = np.sqrt(np.maximum(R * R - pp * pp, 0.0))
    entries = np.asarray(domain.center) + pp[:, None] * nrm - half[:, None] * d
    return entries, d


def chord_samples(field: SoundSpeedField, domain: Disc, entry, direction, n: int,
                  tol: float = 1e-9) -> tuple[np.ndarray, np.ndarray]:
    """Points x(sigma_i) at n uniformly spaced flow parameters from entry to exit.

    Returns (sigma (n,), x (n, dim)).
    """
    rec = lens_data(field, domain, entry, direction, tol=tol)
    s = np.linspace(0.0, rec.travel_time, n)
    if field.constant is not None:
        speed = np.sqrt(field.constant)
        return s, np.asarray(entry)[None, :] + speed * s[:, None] * rec.entry_direction[None, :]
    ray = trace_bicharacteristic(field, rec.entry, rec.travel_time * (1 + 1e-12), tol=tol)
    z, _ = ray.at(np.minimum(s, ray.sigma[-1]))
    return s, z[:, :field.dim]


def write_lens_csv(path, records, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            fh.write(header)
        w = csv.writer(fh)
        w.writerow(LENS_COLUMNS)
        for r in records:
            w.writerow([repr(float(v)) for v in r.row()])
