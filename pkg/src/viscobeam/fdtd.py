"""Leapfrog solver for the viscoacoustic equation with memory.

We integrate the unnormalized form

    u_tt = div(c grad u) - int_0^t div(G(x, t - s) grad u(x, s)) ds + 2 f

on a node grid with homogeneous Dirichlet data on the box boundary.  Fluxes
live on cell faces, so the update is the usual second-order staggered stencil.
Exponential-sum kernels use one auxiliary field per term,

    I_j(t) = int_0^t exp(r_j (t - s)) grad u(s) ds,

advanced with the exact exponential factor and a trapezoid rule; other kernels
use a direct product-trapezoid convolution over a capped history.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .errors import (ArgumentError, CFLViolation, ConfigurationError, DataModelViolation, DomainError,
                     InstabilityError)
from .media import (EmmKernel, ExpSumKernel, MemoryKernel, SoundSpeedField, exponential_kernel,
                    zero_kernel)
from .rays import Disc

log = logging.getLogger(__name__)

CFL_LIMIT = {1: 1.0, 2: 0.7}
MAGIC = b"VISC"
FORMAT_VERSION = 1


@dataclass
class SimGrid:
    """Node grid on [lower, upper] (boundary nodes included) with time step dt."""
    shape: tuple
    lower: tuple
    upper: tuple
    dt: float
    steps: int

    def __post_init__(self):
        self.shape = tuple(int(n) for n in self.shape)
        self.lower = tuple(float(v) for v in self.lower)
        self.upper = tuple(float(v) for v in self.upper)
        if len(self.shape) not in (1, 2):
            raise ArgumentError("only 1D and 2D grids are supported")
        if not (len(self.shape) == len(self.lower) == len(self.upper)):
            raise ArgumentError("shape, lower and upper must have the same length")
        if min(self.shape) < 3:
            raise ArgumentError("need at least 3 nodes per axis")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise ArgumentError("upper must exceed lower on every axis")
        if self.dt <= 0 or self.steps < 0:
            raise ArgumentError("dt must be positive and steps non-negative")

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def spacing(self) -> tuple:
        return tuple((hi - lo) / (n - 1) for lo, hi, n in zip(self.lower, self.upper, self.shape))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(lo, hi, n) for lo, hi, n in zip(self.lower, self.upper, self.shape)]

    def nodes(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    def faces(self, axis: int) -> np.ndarray:
        """Midpoints between neighbouring nodes along ``axis``."""
        axes = self.axes()
        a = axes[axis]
        axes[axis] = 0.5 * (a[1:] + a[:-1])
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.steps + 1)

    def cfl(self, c_max: float) -> float:
        return float(np.sqrt(c_max) * self.dt / min(self.spacing))

    @classmethod
    def from_cfl(cls, shape, lower, upper, c_max: float, cfl: float, duration: float) -> "SimGrid":
        spacing = min((hi - lo) / (n - 1) for lo, hi, n in zip(lower, upper, shape))
        dt = cfl * spacing / np.sqrt(c_max)
        steps = int(np.ceil(duration / dt))
        return cls(tuple(shape), tuple(lower), tuple(upper), dt, steps)


@dataclass
class SimState:
    """Two time levels of u plus the auxiliary memory fields (one per kernel term and axis)."""
    u_prev: np.ndarray
    u: np.ndarray
    memory: list
    step: int = 0


@dataclass
class SourceSpec:
    """f(x, t) together with a bounding description of its support.

    ``support`` is ((lo, hi) per axis, (t0, t1)); outside it f must vanish.
    """
    fn: Callable[[np.ndarray, float], np.ndarray]
    support: tuple
    label: str = "source"

    @classmethod
    def gaussian_ricker(cls, center, width: float, frequency: float, delay: float | None = None,
                        amplitude: float = 1.0) -> "SourceSpec":
        """Gaussian in space times a Ricker wavelet in time.

        The Gaussian is cut at 6 widths, where it is below 1e-15, so the
        truncation stays under double-precision noise.
        """
        center = np.asarray(center, dtype=float)
        delay = 1.2 / frequency if delay is None else float(delay)
        reach = 6.0 * width
        t_reach = 1.2 / frequency

        def fn(x, t):
            r2 = np.sum((x - center) ** 2, axis=-1)
            arg = (np.pi * frequency * (t - delay)) ** 2
            ricker = (1.0 - 2.0 * arg) * np.exp(-arg) if abs(t - delay) <= t_reach else 0.0
            return np.where(r2 <= reach**2, amplitude * ricker * np.exp(-r2 / width**2), 0.0)

        box = tuple((float(c - reach), float(c + reach)) for c in center)
        return cls(fn, (box, (max(0.0, delay - t_reach), delay + t_reach)), "gaussian-ricker")

    @classmethod
    def zero(cls) -> "SourceSpec":
        return cls(lambda x, t: np.zeros(x.shape[:-1]), ((), (0.0, 0.0)), "zero")

    def scaled(self, factor: float) -> "SourceSpec":
        return SourceSpec(lambda x, t, f=self.fn: factor * f(x, t), self.support, self.label)

    def active(self, t: float) -> bool:
        t0, t1 = self.support[1]
        return t0 <= t <= t1


@dataclass
class ProtectedRegion:
    """The interior set M = [0, T] x Omega where sources and records are not allowed."""
    domain: Disc
    T: float

    def contains(self, x, t) -> np.ndarray:
        return (self.domain.level(np.asarray(x, dtype=float)) < 0) & (np.asarray(t) >= 0) & (np.asarray(t) <= self.T)


@dataclass
class SimulationResult:
    grid: SimGrid
    times: np.ndarray
    receivers: np.ndarray
    traces: np.ndarray            # (steps + 1, n_receivers)
    energy: np.ndarray            # (steps,) values at half steps, empty when not requested
    state: SimState
    snapshots: dict = field(default_factory=dict)
    reflection_time: float = np.inf


class _Memory:
    """Memory flux sum_j w_j I_j per axis, advanced once per step."""

    def __init__(self, kernel: MemoryKernel, grid: SimGrid, history_cap: int):
        self.grid = grid
        self.kind = "none"
        self.faces = [grid.faces(a) for a in range(grid.dim)]
        if kernel is None or kernel.is_zero:
            return
        masks = [kernel.contains(f) for f in self.faces]
        terms = kernel.exponential_terms(self.faces[0][masks[0]][:1]) if np.any(masks[0]) else None
        if isinstance(kernel, ExpSumKernel) and terms is not None:
            self.kind = "ade"
            self.w, self.decay = [], []
            for f, m in zip(self.faces, masks):
                w = np.zeros(f.shape[:-1] + (kernel.n_terms,))
                r = np.zeros_like(w)
                if np.any(m):
                    wi, ri = kernel.exponential_terms(f[m])
                    w[m], r[m] = wi, ri
                self.w.append(np.moveaxis(w, -1, 0))
                self.decay.append(np.exp(np.moveaxis(r, -1, 0) * grid.dt))
            self.I = [np.zeros_like(w) for w in self.w]
        else:
            self.kind = "convolution"
            cap = min(history_cap, grid.steps + 1)
            if cap < grid.steps + 1:
                log.warning("memory history truncated to %d of %d steps", cap, grid.steps + 1)
            lags = grid.dt * np.arange(cap)
            lags = lags[lags <= kernel.t_max]
            self.G = []
            for f, m in zip(self.faces, masks):
                g = np.zeros((len(lags),) + f.shape[:-1])
                if np.any(m):
                    pts = f[m]
                    g[:, m] = np.stack([kernel.G(pts, np.full(len(pts), t)) for t in lags])
                self.G.append(g)
            self.history = [[] for _ in self.faces]

    def update(self, grads: list, grads_prev: list | None) -> list:
        """Advance to the current step given grad u now (and at the previous step)."""
        dt = self.grid.dt
        if self.kind == "none":
            return [0.0 for _ in grads]
        out = []
        if self.kind == "ade":
            for a, g in enumerate(grads):
                e = self.decay[a]
                if grads_prev is None:
                    self.I[a] = np.zeros_like(self.I[a])
                else:
                    self.I[a] = e * self.I[a] + 0.5 * dt * (e * grads_prev[a][None] + g[None])
                out.append(np.sum(self.w[a] * self.I[a], axis=0))
            return out
        for a, g in enumerate(grads):
            hist = self.history[a]
            hist.insert(0, g)
            G = self.G[a]
            n = min(len(hist), len(G))
            del hist[n:]
            if len(hist) == 1:
                out.append(np.zeros_like(g))
                continue
            acc = 0.5 * G[0] * hist[0]
            for lag in range(1, n - 1):
                acc = acc + G[lag] * hist[lag]
            acc = acc + 0.5 * G[n - 1] * hist[n - 1]
            out.append(dt * acc)
        return out

    def export(self) -> list:
        if self.kind == "ade":
            return [I.copy() for I in self.I]
        return []


def _gradients(u: np.ndarray, spacing) -> list:
    return [np.diff(u, axis=a) / h for a, h in enumerate(spacing)]


def _divergence(fluxes: list, spacing, shape) -> np.ndarray:
    out = np.zeros(shape)
    inner = tuple(slice(1, -1) for _ in shape)
    for a, (F, h) in enumerate(zip(fluxes, spacing)):
        d = np.diff(F, axis=a) / h
        sl = [slice(1, -1)] * len(shape)
        sl[a] = slice(None)
        out[inner] += d[tuple(sl)]
    return out


def discrete_energy(u_prev: np.ndarray, u: np.ndarray, c_faces: list, grid: SimGrid) -> float:
    """E = 1/2 sum ((u - u_prev)/dt)^2 + 1/2 sum c grad u . grad u_prev, times the cell volume.

    This product form is exactly conserved by the leapfrog scheme when G = 0.
    """
    h = grid.spacing
    kin = np.sum(((u - u_prev) / grid.dt) ** 2)
    g1, g0 = _gradients(u, h), _gradients(u_prev, h)
    pot = sum(np.sum(c * a * b) for c, a, b in zip(c_faces, g1, g0))
    return float(0.5 * (kin + pot) * grid.cell_volume)


def energy(state: SimState, field_: SoundSpeedField, grid: SimGrid) -> float:
    """Discrete energy of a state, with the midpoint time derivative between its two levels."""
    c_faces = [field_.value_fn(grid.faces(a)) for a in range(grid.dim)]
    return discrete_energy(state.u_prev, state.u, c_faces, grid)


def _interp_weights(grid: SimGrid, points: np.ndarray):
    """Multilinear interpolation stencils (index tuples, weights) for receiver points."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[-1] != grid.dim:
        raise ArgumentError("receiver dimension does not match the grid")
    idx, frac = [], []
    for a, (lo, h, n) in enumerate(zip(grid.lower, grid.spacing, grid.shape)):
        s = (pts[:, a] - lo) / h
        if np.any(s < -1e-9) or np.any(s > n - 1 + 1e-9):
            raise DomainError("receiver outside the computational box")
        i = np.clip(np.floor(s).astype(int), 0, n - 2)
        idx.append(i)
        frac.append(s - i)
    stencils = []
    for corner in np.ndindex(*([2] * grid.dim)):
        w = np.ones(len(pts))
        ind = []
        for a, bit in enumerate(corner):
            w = w * (frac[a] if bit else 1.0 - frac[a])
            ind.append(idx[a] + bit)
        stencils.append((tuple(ind), w))
    return stencils


def _sample(u: np.ndarray, stencils) -> np.ndarray:
    return sum(w * u[ind] for ind, w in stencils)


def _reflection_time(grid: SimGrid, source: SourceSpec, receivers: np.ndarray, c_max: float) -> float:
    """Earliest time a boundary reflection of the source can reach a receiver."""
    box, _ = source.support
    if not box:
        return np.inf
    lo, hi = np.array(grid.lower), np.array(grid.upper)
    src_lo = np.array([b[0] for b in box])
    src_hi = np.array([b[1] for b in box])
    best = np.inf
    for r in np.atleast_2d(receivers):
        for a in range(grid.dim):
            # image across the lower / upper wall along axis a
            d_low = (src_lo[a] - lo[a]) + (r[a] - lo[a])
            d_high = (hi[a] - src_hi[a]) + (hi[a] - r[a])
            best = min(best, d_low, d_high)
    t0 = source.support[1][0]
    return float(t0 + max(best, 0.0) / np.sqrt(c_max))


def simulate(field_: SoundSpeedField, kernel: MemoryKernel | None, grid: SimGrid,
             source: SourceSpec | None = None, receivers=None, u0: np.ndarray | Callable | None = None,
             v0: np.ndarray | Callable | None = None, record_energy: bool = False,
             snapshot_steps: Sequence[int] = (), history_cap: int = 4000,
             check_every: int = 1, u1: np.ndarray | Callable | None = None) -> SimulationResult:
    """Run the leapfrog scheme for grid.steps steps and sample u at the receivers.

    The first step uses a Taylor start from (u0, v0) unless ``u1``, the field at
    t = dt, is given explicitly.
    """
    if field_.dim != grid.dim:
        raise ArgumentError("field and grid dimensions differ")
    nodes = grid.nodes()
    if not np.all(field_.contains(nodes)):
        raise DomainError("computational box exceeds the sound-speed bounding box")
    c_nodes = field_.value_fn(nodes)
    c_faces = [field_.value_fn(grid.faces(a)) for a in range(grid.dim)]
    c_max = float(max(np.max(c_nodes), *(np.max(c) for c in c_faces)))
    cfl = grid.cfl(c_max)
    if cfl > CFL_LIMIT[grid.dim] + 1e-12:
        raise CFLViolation(f"CFL number {cfl:.3f} exceeds {CFL_LIMIT[grid.dim]} in {grid.dim}D")
    source = SourceSpec.zero() if source is None else source
    receivers = np.zeros((0, grid.dim)) if receivers is None else np.atleast_2d(np.asarray(receivers, float))
    stencils = _interp_weights(grid, receivers) if len(receivers) else []
    h = grid.spacing
    dt = grid.dt

    def initial(v):
        if v is None:
            return np.zeros(grid.shape)
        arr = v(nodes) if callable(v) else np.asarray(v, dtype=float)
        if arr.shape != grid.shape:
            raise ArgumentError("initial data has the wrong shape")
        arr = arr.copy()
        _zero_boundary(arr)
        return arr

    u_now = initial(u0)
    vel = initial(v0)
    memory = _Memory(kernel, grid, history_cap)

    def forcing(t):
        if not source.active(t):
            return 0.0
        f = source.fn(nodes, t)
        return 2.0 * f

    def accel(u, t, grads_prev):
        grads = _gradients(u, h)
        mem = memory.update(grads, grads_prev)
        fluxes = [c * g - m for c, g, m in zip(c_faces, grads, mem)]
        a = _divergence(fluxes, h, grid.shape) + forcing(t)
        return a, grads

    times = grid.times()
    traces = np.zeros((grid.steps + 1, len(receivers)))
    energies = []
    snapshots = {}
    snaps = set(int(s) for s in snapshot_steps)

    acc, grads = accel(u_now, 0.0, None)
    if u1 is None:
        u_next = u_now + dt * vel + 0.5 * dt * dt * acc
        _zero_boundary(u_next)
    else:
        u_next = initial(u1)
    u_prev = u_now
    if len(receivers):
        traces[0] = _sample(u_now, stencils)
    if 0 in snaps:
        snapshots[0] = u_now.copy()
    u_now = u_next
    for n in range(1, grid.steps + 1):
        if len(receivers):
            traces[n] = _sample(u_now, stencils)
        if n in snaps:
            snapshots[n] = u_now.copy()
        if record_energy:
            energies.append(discrete_energy(u_prev, u_now, c_faces, grid))
        if n % check_every == 0 and not np.isfinite(np.sum(u_now)):
            raise InstabilityError(f"non-finite field at step {n}", step=n)
        if n == grid.steps:
            break
        acc, grads = accel(u_now, times[n], grads)
        u_next = 2.0 * u_now - u_prev + dt * dt * acc
        _zero_boundary(u_next)
        u_prev, u_now = u_now, u_next
    if not np.all(np.isfinite(u_now)):
        raise InstabilityError(f"non-finite field at step {grid.steps}", step=grid.steps)
    state = SimState(u_prev, u_now, memory.export(), grid.steps)
    refl = _reflection_time(grid, source, receivers, c_max) if len(receivers) else np.inf
    if refl < times[-1]:
        log.warning("boundary reflections may reach receivers after t = %.4g (run ends at %.4g)", refl, times[-1])
    return SimulationResult(grid, times, receivers, traces, np.array(energies), state, snapshots, refl)


def _zero_boundary(u: np.ndarray) -> None:
    for a in range(u.ndim):
        sl = [slice(None)] * u.ndim
        sl[a] = 0
        u[tuple(sl)] = 0.0
        sl[a] = -1
        u[tuple(sl)] = 0.0


# source-to-solution map -----------------------------------------------------

def check_source_support(source: SourceSpec, region: ProtectedRegion) -> None:
    """Reject sources whose support meets [0, T] x Omega."""
    box, (t0, t1) = source.support
    if not box:
        return
    if t1 < 0 or t0 > region.T:
        return
    center = np.asarray(region.domain.center, dtype=float)
    nearest = np.clip(center, [b[0] for b in box], [b[1] for b in box])
    if np.linalg.norm(nearest - center) < region.domain.radius:
        raise DataModelViolation("source support intersects the protected region M")


def source_to_solution(field_: SoundSpeedField, kernel: MemoryKernel | None, grid: SimGrid,
                       region: ProtectedRegion, source: SourceSpec, receivers) -> SimulationResult:
    """Exterior traces u|_(M' \\ M); samples taken inside M are replaced by NaN."""
    check_source_support(source, region)
    res = simulate(field_, kernel, grid, source, receivers)
    inside = region.contains(res.receivers[None, :, :], res.times[:, None])
    traces = res.traces.copy()
    traces[inside] = np.nan
    res.traces = traces
    res.state = SimState(np.full_like(res.state.u, np.nan), np.full_like(res.state.u, np.nan), [], res.state.step)
    return res


# configuration and IO -------------------------------------------------------

def field_from_config(cfg: dict, bbox) -> SoundSpeedField:
    kind = cfg.get("type", "constant")
    if kind == "constant":
        return SoundSpeedField.homogeneous(float(cfg["value"]), bbox=bbox)
    if kind == "gaussian_lens":
        return SoundSpeedField.gaussian_lens(cfg.get("background", 1.0), cfg.get("amplitude", 0.3),
                                             cfg.get("width", 1.0), tuple(cfg.get("center", (0.0, 0.0))),
                                             bbox=bbox)
    if kind == "csv":
        return SoundSpeedField.from_csv(cfg["path"])
    raise ConfigurationError(f"unknown field type {kind!r}")


def kernel_from_config(cfg: dict | None, dim: int) -> MemoryKernel:
    if not cfg or cfg.get("type", "zero") == "zero":
        return zero_kernel(dim)
    kind = cfg["type"]
    if kind == "emm":
        return EmmKernel(cfg["alphas"], cfg["betas"], dim=dim)
    if kind == "exponential":
        return exponential_kernel(float(cfg["amplitude"]), float(cfg["rate"]), dim=dim)
    if kind == "expsum":
        return ExpSumKernel(cfg["weights"], cfg["rates"], dim=dim)
    raise ConfigurationError(f"unknown kernel type {kind!r}")


def source_from_config(cfg: dict | None) -> SourceSpec:
    if not cfg:
        return SourceSpec.zero()
    if cfg.get("type", "ricker") != "ricker":
        raise ConfigurationError(f"unknown source type {cfg.get('type')!r}")
    return SourceSpec.gaussian_ricker(cfg["center"], float(cfg["width"]), float(cfg["frequency"]),
                                      cfg.get("delay"), float(cfg.get("amplitude", 1.0)))


@dataclass
class RunConfig:
    grid: SimGrid
    field: SoundSpeedField
    kernel: MemoryKernel
    source: SourceSpec
    receivers: np.ndarray
    raw: dict


def load_run_config(path_or_dict) -> RunConfig:
    """Parse the JSON run description: grid, field, kernel, source, receivers."""
    if isinstance(path_or_dict, dict):
        cfg = path_or_dict
    else:
        try:
            cfg = json.loads(Path(path_or_dict).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read run configuration: {exc}") from exc
    try:
        g = cfg["grid"]
        bbox = tuple(zip(g["lower"], g["upper"]))
        fld = field_from_config(cfg.get("field", {"type": "constant", "value": 1.0}), bbox)
        if "dt" in g:
            grid = SimGrid(tuple(g["shape"]), tuple(g["lower"]), tuple(g["upper"]), float(g["dt"]), int(g["steps"]))
        else:
            c_max = fld.sample_max(max(g["shape"]))
            grid = SimGrid.from_cfl(g["shape"], g["lower"], g["upper"], c_max, float(g.get("cfl", 0.5)),
                                    float(g["duration"]))
        ker = kernel_from_config(cfg.get("kernel"), grid.dim)
        src = source_from_config(cfg.get("source"))
        rec = np.asarray(cfg.get("receivers", []), dtype=float).reshape(-1, grid.dim)
    except KeyError as exc:
        raise ConfigurationError(f"missing configuration key {exc}") from exc
    return RunConfig(grid, fld, ker, src, rec, cfg)


def write_traces_csv(path, times: np.ndarray, traces: np.ndarray, header: str | None = None) -> None:
    names = ["t"] + [f"receiver_{i + 1}" for i in range(traces.shape[1])]
    with open(path, "w") as fh:
        if header:
            fh.write(header)
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, np.column_stack([times, traces]), delimiter=",", fmt="%.17g")


def read_traces_csv(path) -> tuple[np.ndarray, np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    body = np.loadtxt(lines[1:], delimiter=",", ndmin=2)
    return body[:, 0], body[:, 1:]


def write_traces_binary(path, times: np.ndarray, traces: np.ndarray) -> None:
    """32-byte header (magic, version, nt, nrec, dt) then little-endian float64 traces, time-major."""
    nt, nrec = traces.shape
    dt = float(times[1] - times[0]) if len(times) > 1 else 0.0
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sIQQd", MAGIC, FORMAT_VERSION, nt, nrec, dt))
        fh.write(np.ascontiguousarray(traces, dtype="<f8").tobytes())


def read_traces_binary(path) -> tuple[np.ndarray, np.ndarray]:
    raw = Path(path).read_bytes()
    if len(raw) < 32:
        raise ConfigurationError("file too short for a trace header")
    magic, version, nt, nrec, dt = struct.unpack("<4sIQQd", raw[:32])
    if magic != MAGIC:
        raise ConfigurationError("not a trace file (bad magic)")
    if version != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported trace format version {version}")
    body = np.frombuffer(raw[32:], dtype="<f8")
    if body.size != nt * nrec:
        raise ConfigurationError("trace file is truncated")
    return dt * np.arange(nt), body.reshape(nt, nrec).copy()
