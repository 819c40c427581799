"""Second-kind Volterra equations u(t) = f(t) + int_0^t K(t-s) w(s) u(s) ds.

All integrals use the product trapezoid rule on a uniform grid, which keeps
the system lower triangular: each u_n follows from u_0..u_{n-1} by one
division.  The resolvent route builds R = sum_n K_n from iterated
convolutions and then u = f + R * f.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ArgumentError, ConvergenceError, SingularOperatorError

TimeFunction = Callable[[np.ndarray], np.ndarray] | np.ndarray | float


@dataclass(frozen=True)
class TimeGrid:
    t0: float
    t1: float
    n_steps: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ArgumentError("TimeGrid needs t1 > t0")
        if self.n_steps < 1:
            raise ArgumentError("TimeGrid needs n_steps >= 1")

    @property
    def dt(self) -> float:
        return (self.t1 - self.t0) / self.n_steps

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def lags(self) -> np.ndarray:
        return self.dt * np.arange(self.n_steps + 1)


@dataclass(frozen=True)
class ConvolutionKernel:
    """Difference kernel K(t - s), evaluated on lags in [0, t1 - t0]."""

    fn: Callable[[np.ndarray], np.ndarray]

    def sample(self, grid: TimeGrid) -> np.ndarray:
        vals = np.broadcast_to(np.asarray(self.fn(grid.lags), dtype=float), (grid.n_steps + 1,)).copy()
        if not np.all(np.isfinite(vals)):
            raise ArgumentError("kernel is not finite on the grid")
        return vals

    @classmethod
    def constant(cls, lam: float) -> "ConvolutionKernel":
        return cls(lambda t: np.full(np.shape(t), float(lam)))


def _sample(f: TimeFunction, grid: TimeGrid) -> np.ndarray:
    if callable(f):
        vals = f(grid.times)
    else:
        vals = f
    return np.broadcast_to(np.asarray(vals, dtype=float), (grid.n_steps + 1,)).copy()


def trapezoid_convolution(k: np.ndarray, g: np.ndarray, dt: float) -> np.ndarray:
    """(k * g)(t_n) = int_0^{t_n} k(t_n - s) g(s) ds by the trapezoid rule."""
    n = len(g)
    full = np.convolve(k[:n], g)[:n]
    out = dt * (full - 0.5 * (k[:n] * g[0] + k[0] * g))
    out[0] = 0.0
    return out


def solve_second_kind(kernel: ConvolutionKernel | np.ndarray, source: TimeFunction, grid: TimeGrid,
                      weight: TimeFunction | None = None) -> np.ndarray:
    """Forward substitution for u = f + int_0^t K(t-s) w(s) u(s) ds."""
    K = kernel.sample(grid) if isinstance(kernel, ConvolutionKernel) else np.asarray(kernel, float)
    f = _sample(source, grid)
    w = np.ones_like(f) if weight is None else _sample(weight, grid)
    dt = grid.dt
    n = grid.n_steps + 1
    u = np.empty(n)
    u[0] = f[0]
    wu = np.empty(n)
    wu[0] = w[0] * u[0]
    denom_base = 1.0 - 0.5 * dt * K[0]
    for i in range(1, n):
        # sum_{j=1}^{i-1} K[i-j] (w u)[j]  +  half weight on j = 0
        hist = 0.5 * K[i] * wu[0]
        if i > 1:
            hist += np.dot(K[i - 1:0:-1], wu[1:i])
        denom = 1.0 - 0.5 * dt * K[0] * w[i] if weight is not None else denom_base
        if denom == 0.0:
            raise SingularOperatorError("trapezoid diagonal vanished")
        u[i] = (f[i] + dt * hist) / denom
        wu[i] = w[i] * u[i]
    return u


def resolvent_kernel(kernel: ConvolutionKernel | np.ndarray, grid: TimeGrid, tol: float = 1e-12,
                     max_terms: int = 64) -> np.ndarray:
    """Truncated Neumann series R = K_1 + K_2 + ..., K_n = K_1 * K_{n-1}."""
    if tol <= 0:
        raise ArgumentError("tol must be positive")
    K = kernel.sample(grid) if isinstance(kernel, ConvolutionKernel) else np.asarray(kernel, float)
    R = K.copy()
    term = K.copy()
    for _ in range(2, max_terms + 1):
        term = trapezoid_convolution(K, term, grid.dt)
        R += term
        if np.max(np.abs(term)) <= tol:
            return R
    raise ConvergenceError(f"Neumann series did not reach tol={tol} within {max_terms} terms")


def solve_with_resolvent(R: np.ndarray, source: TimeFunction, grid: TimeGrid) -> np.ndarray:
    f = _sample(source, grid)
    return f + trapezoid_convolution(R, f, grid.dt)


def apply_memory_operator_v(kernel_values: TimeFunction, weight: TimeFunction, values: TimeFunction,
                            grid: TimeGrid, leading: float) -> np.ndarray:
    """(V w)(t) = leading * w(t) - 1/2 int_0^t G(t-s) weight(s) w(s) ds.

    ``leading`` is the coefficient 1/2 c |grad phi(0)|^2.  ``kernel_values``
    is G(x, .) at a fixed point x, sampled on lags or given as a function.
    """
    if leading == 0.0:
        raise SingularOperatorError("leading coefficient of V vanishes")
    G = _sample(kernel_values, TimeGrid(0.0, grid.t1 - grid.t0, grid.n_steps))
    w = _sample(weight, grid)
    u = _sample(values, grid)
    return leading * u - 0.5 * trapezoid_convolution(G, w * u, grid.dt)


def invert_memory_operator_v(kernel_values: TimeFunction, weight: TimeFunction, rhs: TimeFunction,
                             grid: TimeGrid, leading: float) -> np.ndarray:
    """Solve V w = rhs as the second-kind equation w = rhs/leading + (1/(2 leading)) int G weight w."""
    if leading == 0.0:
        raise SingularOperatorError("leading coefficient of V vanishes")
    G = _sample(kernel_values, TimeGrid(0.0, grid.t1 - grid.t0, grid.n_steps))
    f = _sample(rhs, grid) / leading
    return solve_second_kind(G / (2.0 * leading), f, grid, weight=weight)
