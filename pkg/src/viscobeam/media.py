"""Sound-speed fields and memory kernels.

``c`` carries units of speed squared throughout the package: the wave speed
is ``sqrt(c)`` and travel times are measured in the metric ``c^{-1} dx^2``.

Points are arrays whose last axis holds the coordinates, so every evaluator
accepts a single point ``(d,)`` or a batch ``(..., d)``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.interpolate import RectBivariateSpline

from .errors import ArgumentError, DomainError

Array = np.ndarray
Coefficient = float | Callable[[Array], Array]

_BOX_SLACK = 1e-12


def _as_points(x, dim: int) -> Array:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != dim:
        raise ArgumentError(f"expected points with last axis {dim}, got shape {x.shape}")
    return x


def _inside(x: Array, lo: Array, hi: Array) -> Array:
    span = np.maximum(hi - lo, 1.0)
    return np.all((x >= lo - _BOX_SLACK * span) & (x <= hi + _BOX_SLACK * span), axis=-1)


@dataclass(frozen=True)
class SoundSpeedField:
    """c(x) with exact gradient and Hessian.

    Build instances through the constructors below rather than directly.
    ``constant`` holds the value for homogeneous media (None otherwise), which
    lets downstream code take straight-ray shortcuts.
    """

    value_fn: Callable[[Array], Array]
    grad_fn: Callable[[Array], Array]
    hess_fn: Callable[[Array], Array]
    lower: Array
    upper: Array
    name: str = "field"
    constant: float | None = None

    @property
    def dim(self) -> int:
        return len(self.lower)

    def contains(self, x) -> Array:
        return _inside(_as_points(x, self.dim), self.lower, self.upper)

    def _check(self, x) -> Array:
        x = _as_points(x, self.dim)
        if not np.all(self.contains(x)):
            raise DomainError(f"point outside the bounding box of {self.name}")
        return x

    def value(self, x) -> Array:
        return self.value_fn(self._check(x))

    def gradient(self, x) -> Array:
        return self.grad_fn(self._check(x))

    def hessian(self, x) -> Array:
        return self.hess_fn(self._check(x))

    def jets(self, x) -> tuple[Array, Array, Array]:
        x = self._check(x)
        return self.value_fn(x), self.grad_fn(x), self.hess_fn(x)

    def sample_min(self, n: int = 101) -> float:
        """Minimum of c over a dense tensor grid of the bounding box."""
        axes = [np.linspace(lo, hi, n) for lo, hi in zip(self.lower, self.upper)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return float(np.min(self.value_fn(pts)))

    def sample_max(self, n: int = 101) -> float:
        axes = [np.linspace(lo, hi, n) for lo, hi in zip(self.lower, self.upper)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return float(np.max(self.value_fn(pts)))

    # constructors -----------------------------------------------------

    @classmethod
    def homogeneous(cls, c: float, bbox=((-2.0, 2.0), (-2.0, 2.0))) -> "SoundSpeedField":
        if c <= 0:
            raise ArgumentError("c must be positive")
        lo, hi = _bbox_arrays(bbox)
        d = len(lo)

        def val(x):
            return np.full(x.shape[:-1], float(c))

        def grad(x):
            return np.zeros(x.shape)

        def hess(x):
            return np.zeros(x.shape + (d,))

        return cls(val, grad, hess, lo, hi, name=f"constant({c})", constant=float(c))

    @classmethod
    def gaussian_lens(cls, background: float = 1.0, amplitude: float = 0.3, width: float = 1.0,
                      center=(0.0, 0.0), bbox=((-3.0, 3.0), (-3.0, 3.0))) -> "SoundSpeedField":
        """c(x) = background - amplitude * exp(-|x - center|^2 / width^2)."""
        lo, hi = _bbox_arrays(bbox)
        x0 = np.asarray(center, dtype=float)
        d = len(lo)
        w2 = width * width

        def bump(x):
            r = x - x0
            return r, np.exp(-np.sum(r * r, axis=-1) / w2)

        def val(x):
            return background - amplitude * bump(x)[1]

        def grad(x):
            r, e = bump(x)
            return (2.0 * amplitude / w2) * e[..., None] * r

        def hess(x):
            r, e = bump(x)
            eye = np.eye(d)
            outer = r[..., :, None] * r[..., None, :]
            return amplitude * e[..., None, None] * (2.0 * eye / w2 - 4.0 * outer / (w2 * w2))

        name = f"gaussian_lens({background},{amplitude},{width})"
        return cls(val, grad, hess, lo, hi, name=name)

    @classmethod
    def radial(cls, profile: Callable, dprofile: Callable, d2profile: Callable,
               center=(0.0, 0.0), bbox=((-3.0, 3.0), (-3.0, 3.0)), name="radial") -> "SoundSpeedField":
        """c(x) = profile(|x - center|). Requires dprofile(0) == 0."""
        lo, hi = _bbox_arrays(bbox)
        x0 = np.asarray(center, dtype=float)
        d = len(lo)

        def polar(x):
            r_vec = x - x0
            r = np.sqrt(np.sum(r_vec * r_vec, axis=-1))
            safe = np.where(r > 1e-14, r, 1.0)
            return r_vec, r, safe

        def val(x):
            return profile(polar(x)[1])

        def grad(x):
            r_vec, r, safe = polar(x)
            g = dprofile(r) / safe
            return np.where((r > 1e-14)[..., None], g[..., None] * r_vec, 0.0)

        def hess(x):
            r_vec, r, safe = polar(x)
            unit = r_vec / safe[..., None]
            outer = unit[..., :, None] * unit[..., None, :]
            eye = np.eye(d)
            d1 = dprofile(r)
            d2 = d2profile(r)
            far = d2[..., None, None] * outer + (d1 / safe)[..., None, None] * (eye - outer)
            near = d2[..., None, None] * eye
            return np.where((r > 1e-14)[..., None, None], far, near)

        return cls(val, grad, hess, lo, hi, name=name)

    @classmethod
    def gridded(cls, values: Array, x0: float, y0: float, dx: float, dy: float) -> "SoundSpeedField":
        """Bicubic spline through samples values[iy, ix] at (x0 + ix*dx, y0 + iy*dy)."""
        values = np.asarray(values, dtype=float)
        ny, nx = values.shape
        if nx < 4 or ny < 4:
            raise ArgumentError("gridded fields need at least 4 samples per axis")
        if np.any(values <= 0):
            raise ArgumentError("gridded c must be positive")
        xs = x0 + dx * np.arange(nx)
        ys = y0 + dy * np.arange(ny)
        spline = RectBivariateSpline(xs, ys, values.T, kx=3, ky=3, s=0)

        def ev(x, **kw):
            flat = x.reshape(-1, 2)
            return spline.ev(flat[:, 0], flat[:, 1], **kw).reshape(x.shape[:-1])

        def val(x):
            return ev(x)

        def grad(x):
            return np.stack([ev(x, dx=1), ev(x, dy=1)], axis=-1)

        def hess(x):
            cxx, cxy, cyy = ev(x, dx=2), ev(x, dx=1, dy=1), ev(x, dy=2)
            return np.stack([np.stack([cxx, cxy], -1), np.stack([cxy, cyy], -1)], -2)

        lo = np.array([xs[0], ys[0]])
        hi = np.array([xs[-1], ys[-1]])
        return cls(val, grad, hess, lo, hi, name=f"gridded({nx}x{ny})")

    @classmethod
    def from_csv(cls, path) -> "SoundSpeedField":
        values, (x0, y0, dx, dy) = read_grid_csv(path)
        return cls.gridded(values, x0, y0, dx, dy)


def _bbox_arrays(bbox) -> tuple[Array, Array]:
    b = np.asarray(bbox, dtype=float)
    if b.ndim != 2 or b.shape[1] != 2 or np.any(b[:, 1] <= b[:, 0]):
        raise ArgumentError("bbox must be a sequence of (lo, hi) pairs with hi > lo")
    return b[:, 0].copy(), b[:, 1].copy()


# grid CSV -------------------------------------------------------------------

def read_grid_csv(path) -> tuple[Array, tuple[float, float, float, float]]:
    """Read the gridded-field CSV layout.

    First non-comment row: ``nx, ny, x0, y0, dx, dy``.  Then ``ny`` rows of
    ``nx`` values each (row-major, y outermost).  Lines starting with ``#``
    are ignored.
    """
    rows = []
    with open(path) as fh:
        for line in fh:
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            rows.append([float(v) for v in s.split(",")])
    if not rows or len(rows[0]) != 6:
        raise ArgumentError("grid CSV must start with 'nx, ny, x0, y0, dx, dy'")
    nx, ny, x0, y0, dx, dy = rows[0]
    nx, ny = int(nx), int(ny)
    data = np.array(rows[1:], dtype=float)
    if data.shape != (ny, nx):
        raise ArgumentError(f"grid CSV body has shape {data.shape}, header says {(ny, nx)}")
    return data, (x0, y0, dx, dy)


def write_grid_csv(path, values: Array, x0: float, y0: float, dx: float, dy: float,
                   header: str | None = None) -> None:
    values = np.asarray(values, dtype=float)
    ny, nx = values.shape
    with open(path, "w") as fh:
        if header:
            fh.write(header)
        fh.write(f"{nx},{ny},{x0!r},{y0!r},{dx!r},{dy!r}\n")
        for row in values:
            fh.write(",".join("nan" if not np.isfinite(v) else repr(float(v)) for v in row) + "\n")


# kernels --------------------------------------------------------------------

def _coef(v: Coefficient, x: Array) -> Array:
    if callable(v):
        return np.asarray(v(x), dtype=float)
    return np.full(x.shape[:-1], float(v))


def _fd_gradient(fn: Callable[[Array], Array], x: Array, h: float = 1e-5) -> Array:
    d = x.shape[-1]
    out = np.empty(x.shape)
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        out[..., i] = (fn(x + e) - fn(x - e)) / (2 * h)
    return out


class MemoryKernel:
    """G(x, t) on [0, t_max] with a time jet at t = 0.

    Subclasses implement ``_G``, ``_jet`` and ``_grad``.  The public methods
    check the spatial support and the time window.
    """

    dim: int = 2
    t_max: float = np.inf
    lower: Array | None = None
    upper: Array | None = None

    def contains(self, x) -> Array:
        x = _as_points(x, self.dim)
        if self.lower is None:
            return np.ones(x.shape[:-1], dtype=bool)
        return _inside(x, self.lower, self.upper)

    def _check(self, x, t=None):
        x = _as_points(x, self.dim)
        if not np.all(self.contains(x)):
            raise DomainError("point outside the kernel support")
        if t is not None:
            t = np.asarray(t, dtype=float)
            if np.any(t < -1e-14) or np.any(t > self.t_max * (1 + 1e-12)):
                raise DomainError(f"kernel evaluated outside [0, {self.t_max}]")
        return x, t

    def G(self, x, t) -> Array:
        x, t = self._check(x, t)
        return self._G(x, t)

    def time_jet(self, x, order: int) -> Array:
        """Stack [G(x,0), dG/dt(x,0), ..., d^order G/dt^order(x,0)] along axis 0."""
        if order < 0:
            raise ArgumentError("order must be >= 0")
        x, _ = self._check(x)
        return self._jet(x, order)

    def spatial_gradient(self, x, t) -> Array:
        x, t = self._check(x, t)
        return self._grad(x, t)

    def exponential_terms(self, x):
        """Return (weights, rates) with G = sum w_j exp(r_j t), or None."""
        return None

    @property
    def is_zero(self) -> bool:
        return False

    # defaults
    def _grad(self, x, t):
        return _fd_gradient(lambda y: self._G(y, t), x)


class ExpSumKernel(MemoryKernel):
    """G(x,t) = sum_j w_j(x) exp(r_j(x) t).

    Weights and rates are floats or callables of x.  ``weight_grads`` may
    supply exact spatial gradients of the weights; otherwise central
    differences are used.  Rates must be spatially constant when gradients are
    requested through the exact path.
    """

    def __init__(self, weights: Sequence[Coefficient], rates: Sequence[Coefficient],
                 weight_grads: Sequence[Callable] | None = None, t_max: float = np.inf,
                 support=None, dim: int = 2):
        if len(weights) != len(rates):
            raise ArgumentError("weights and rates must have equal length")
        self.weights = list(weights)
        self.rates = list(rates)
        self.weight_grads = list(weight_grads) if weight_grads is not None else None
        self.t_max = float(t_max)
        self.dim = dim
        if support is not None:
            self.lower, self.upper = _bbox_arrays(support)

    @property
    def n_terms(self) -> int:
        return len(self.weights)

    @property
    def is_zero(self) -> bool:
        return self.n_terms == 0 or all((not callable(w)) and w == 0 for w in self.weights)

    def _terms(self, x):
        w = np.stack([_coef(v, x) for v in self.weights], axis=-1) if self.weights else np.zeros(x.shape[:-1] + (0,))
        r = np.stack([_coef(v, x) for v in self.rates], axis=-1) if self.rates else np.zeros(x.shape[:-1] + (0,))
        return w, r

    def exponential_terms(self, x):
        x, _ = self._check(x)
        return self._terms(x)

    def _G(self, x, t):
        w, r = self._terms(x)
        t = np.asarray(t, dtype=float)
        return np.sum(w * np.exp(r * t[..., None]), axis=-1)

    def _jet(self, x, order):
        w, r = self._terms(x)
        return np.stack([np.sum(w * r**k, axis=-1) for k in range(order + 1)])

    def _grad(self, x, t):
        t = np.asarray(t, dtype=float)
        constant_rates = all(not callable(r) for r in self.rates)
        if self.weight_grads is None or not constant_rates:
            return _fd_gradient(lambda y: self._G(y, t), x)
        out = np.zeros(np.broadcast_shapes(x.shape, t.shape + (x.shape[-1],)))
        for wg, r in zip(self.weight_grads, self.rates):
            out = out + np.asarray(wg(x)) * np.exp(float(r) * t)[..., None]
        return out


class EmmKernel(ExpSumKernel):
    """Extended Maxwell model: relaxation sum_j beta_j exp(alpha_j t), G its t-derivative."""

    def __init__(self, alphas: Sequence[Coefficient], betas: Sequence[Coefficient],
                 t_max: float = np.inf, support=None, dim: int = 2, check: bool = True):
        if len(alphas) != len(betas):
            raise ArgumentError("alphas and betas must have equal length")
        if len(alphas) < 1:
            raise ArgumentError("EMM needs at least one component")
        self.alphas = list(alphas)
        self.betas = list(betas)
        weights = [_product(a, b) for a, b in zip(alphas, betas)]
        super().__init__(weights, list(alphas), t_max=t_max, support=support, dim=dim)
        if check and all(not callable(v) for v in list(alphas) + list(betas)):
            a = np.asarray(alphas, dtype=float)
            b = np.asarray(betas, dtype=float)
            if np.any(a >= 0) or np.any(b <= 0):
                raise ArgumentError("EMM requires alpha < 0 and beta > 0")
            if len(np.unique(a)) != len(a):
                raise ArgumentError("EMM alphas must be pairwise distinct")

    @property
    def n_components(self) -> int:
        return len(self.alphas)

    def coefficients(self, x) -> tuple[Array, Array]:
        x, _ = self._check(x)
        a = np.stack([_coef(v, x) for v in self.alphas], axis=-1)
        b = np.stack([_coef(v, x) for v in self.betas], axis=-1)
        return a, b

    def relaxation(self, x, t) -> Array:
        a, b = self.coefficients(x)
        t = np.asarray(t, dtype=float)
        return np.sum(b * np.exp(a * t[..., None]), axis=-1)

    @classmethod
    def from_json(cls, path_or_dict, **kw) -> "EmmKernel":
        """Load ``{"alphas": [...], "betas": [...]}``.

        Each entry is a number (spatially constant) or a nested list sampled on
        the grid given by ``"grid": {"x0","y0","dx","dy"}`` (bicubic spline).
        """
        if isinstance(path_or_dict, dict):
            doc = path_or_dict
        else:
            with open(path_or_dict) as fh:
                doc = json.load(fh)
        grid = doc.get("grid")

        def coef(v):
            if np.isscalar(v):
                return float(v)
            if grid is None:
                raise ArgumentError("gridded EMM coefficients need a 'grid' entry")
            arr = np.asarray(v, dtype=float)
            ny, nx = arr.shape
            xs = grid["x0"] + grid["dx"] * np.arange(nx)
            ys = grid["y0"] + grid["dy"] * np.arange(ny)
            sp = RectBivariateSpline(xs, ys, arr.T, kx=3, ky=3, s=0)
            return lambda x: sp.ev(x[..., 0].ravel(), x[..., 1].ravel()).reshape(x.shape[:-1])

        alphas = [coef(v) for v in doc["alphas"]]
        betas = [coef(v) for v in doc["betas"]]
        return cls(alphas, betas, **kw)


def _product(a: Coefficient, b: Coefficient) -> Coefficient:
    if not callable(a) and not callable(b):
        return float(a) * float(b)
    return lambda x: _coef(a, x) * _coef(b, x)


def zero_kernel(dim: int = 2) -> ExpSumKernel:
    return ExpSumKernel([], [], dim=dim)


def exponential_kernel(amplitude: Coefficient, rate: float, amplitude_grad: Callable | None = None,
                       dim: int = 2, t_max: float = np.inf) -> ExpSumKernel:
    """G(x,t) = amplitude(x) * exp(rate * t)."""
    grads = [amplitude_grad] if amplitude_grad is not None else None
    if grads is None and not callable(amplitude):
        grads = [lambda x: np.zeros(x.shape)]
    return ExpSumKernel([amplitude], [rate], weight_grads=grads, dim=dim, t_max=t_max)


class CallableKernel(MemoryKernel):
    """Generic kernel from a function G(x, t); jets from a supplied function or by differences."""

    def __init__(self, fn: Callable[[Array, Array], Array], jet_fn: Callable | None = None,
                 t_max: float = 10.0, support=None, dim: int = 2):
        self.fn = fn
        self.jet_fn = jet_fn
        self.t_max = float(t_max)
        self.dim = dim
        if support is not None:
            self.lower, self.upper = _bbox_arrays(support)

    def _G(self, x, t):
        t = np.asarray(t, dtype=float)
        return np.asarray(self.fn(x, t), dtype=float)

    def _jet(self, x, order):
        if self.jet_fn is not None:
            return np.asarray(self.jet_fn(x, order), dtype=float)
        # one-sided differences on a small step; accuracy ~h^(5-k)
        h = 1e-3 * min(1.0, self.t_max)
        n = order + 6
        ts = h * np.arange(n)
        samples = np.stack([self._G(x, t) for t in ts])
        # Taylor-fit: samples = V c, c_k = d^k G / k!
        V = np.vander(ts, n, increasing=True)
        coef = np.linalg.solve(V, samples.reshape(n, -1)).reshape(samples.shape)
        fact = np.array([float(np.prod(np.arange(1, k + 1))) for k in range(order + 1)])
        return coef[: order + 1] * fact.reshape((-1,) + (1,) * (coef.ndim - 1))


# operations -----------------------------------------------------------------

def derive_wave_speed(kernel: EmmKernel, x) -> float | Array:
    """c(x) = relaxation(x, 0) = sum_j beta_j(x)."""
    _, b = kernel.coefficients(x)
    out = np.sum(b, axis=-1)
    return float(out) if out.ndim == 0 else out


def kernel_time_jet(kernel: MemoryKernel, x, order: int) -> list[float]:
    jet = kernel.time_jet(np.asarray(x, dtype=float), order)
    return [float(v) for v in np.ravel(jet)] if np.ndim(x) == 1 else jet


def emm_moments(alphas, betas, count: int) -> Array:
    """m_k = sum_j alpha_j^k beta_j for k = 0..count-1."""
    a = np.atleast_1d(np.asarray(alphas, dtype=float))
    b = np.atleast_1d(np.asarray(betas, dtype=float))
    if a.shape != b.shape:
        raise ArgumentError("alphas and betas must have the same length")
    if count < 1:
        raise ArgumentError("count must be >= 1")
    powers = a[None, :] ** np.arange(count)[:, None]
    return powers @ b
