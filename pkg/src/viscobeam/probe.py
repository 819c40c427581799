"""Wave-packet transform, wavefront classification and arrival picking.

The transform tests a sampled space-time field against the packet
e^{ik Psi} b with Psi(y) = zeta.(y - z) + (i/2)|y - z|^2:

    T_k u(z, zeta) = k^{(n+1)/4} sum_y u(y) e^{-ik zeta.(y - z)} e^{-k|y - z|^2/2} b(y - z) dV,

so an L^2-normalized family concentrating at (z, zeta) gives |T_k| ~ 1 and a
smooth k-independent field decays faster than any power of k.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import ArgumentError, DomainError, NoArrivalError, ResolutionError

SAMPLES_PER_WAVELENGTH = 6
DEFAULT_THRESHOLD = -2.0


@dataclass
class SampledField:
    """Values on a uniform tensor grid; axes are (x_1, ..., x_n, t)."""
    axes: list
    values: np.ndarray

    def __post_init__(self):
        self.axes = [np.asarray(a, dtype=float) for a in self.axes]
        self.values = np.asarray(self.values)
        if self.values.shape != tuple(len(a) for a in self.axes):
            raise ArgumentError("values do not match the axes")
        for a in self.axes:
            if len(a) < 2 or np.ptp(np.diff(a)) > 1e-9 * (abs(a[1] - a[0]) + 1e-300):
                raise ArgumentError("axes must be uniform with at least two samples")

    @property
    def spacing(self) -> np.ndarray:
        return np.array([a[1] - a[0] for a in self.axes])

    @classmethod
    def from_function(cls, fn: Callable[[np.ndarray], np.ndarray], center, half_width, spacing) -> "SampledField":
        """Sample fn on a cube center +- half_width with the given spacing (per axis or scalar)."""
        center = np.asarray(center, dtype=float)
        hw = np.broadcast_to(np.asarray(half_width, dtype=float), center.shape)
        h = np.broadcast_to(np.asarray(spacing, dtype=float), center.shape)
        axes = []
        for c, w, d in zip(center, hw, h):
            m = int(np.ceil(w / d))
            axes.append(c + d * np.arange(-m, m + 1))
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return cls(axes, fn(pts))


@dataclass
class WavePacketQuery:
    """Base point z, codirection zeta (tau normalized to 1 for wave-type queries), scales, window radius."""
    z: np.ndarray
    zeta: np.ndarray
    ks: tuple
    radius: float

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.zeta = np.asarray(self.zeta, dtype=float)
        self.ks = tuple(float(k) for k in self.ks)
        if self.radius <= 0:
            raise ArgumentError("window radius must be positive")
        if len(self.ks) < 3 or np.any(np.diff(self.ks) <= 0):
            raise ArgumentError("scale list must be strictly increasing with at least 3 entries")
        if self.z.shape != self.zeta.shape:
            raise ArgumentError("z and zeta must have the same length")

    @property
    def wave_type(self) -> bool:
        """True for tau != 0; tau = 0 queries probe stationary singularities."""
        return abs(self.zeta[-1]) > 0


def window(r: np.ndarray, radius: float) -> np.ndarray:
    """Smooth bump equal to 1 for r <= radius/2 and 0 for r >= radius."""
    s = 2.0 * np.asarray(r, dtype=float) / radius - 1.0       # 0 at the plateau edge, 1 at the rim
    a = np.clip(1.0 - s, 0.0, None)
    b = np.clip(s, 0.0, None)
    fa = np.where(a > 0, np.exp(-1.0 / np.where(a > 0, a, 1.0)), 0.0)
    fb = np.where(b > 0, np.exp(-1.0 / np.where(b > 0, b, 1.0)), 0.0)
    return np.where(s <= 0, 1.0, fa / (fa + fb))


def default_radius(field_: SampledField, cells: int = 8) -> float:
    return float(cells * np.max(field_.spacing))


def wavepacket_transform(field_: SampledField, z, zeta, k: float, radius: float | None = None) -> complex:
    """Windowed inner product (u, e^{ik Psi} b) scaled by k^{(n+1)/4}."""
    z = np.asarray(z, dtype=float)
    zeta = np.asarray(zeta, dtype=float)
    if len(z) != len(field_.axes):
        raise ArgumentError("query dimension does not match the field")
    h = field_.spacing
    if np.any(h > 2 * np.pi / (SAMPLES_PER_WAVELENGTH * k)):
        raise ResolutionError(f"spacing {h.max():.3g} gives fewer than {SAMPLES_PER_WAVELENGTH} "
                              f"samples per wavelength at k = {k:g}")
    radius = default_radius(field_) if radius is None else float(radius)
    sl = []
    for a, c, d in zip(field_.axes, z, h):
        if c - radius < a[0] - 1e-9 * d or c + radius > a[-1] + 1e-9 * d:
            raise DomainError("query window leaves the sampled domain")
        lo = int(np.searchsorted(a, c - radius - 1e-12))
        hi = int(np.searchsorted(a, c + radius + 1e-12, side="right"))
        sl.append(slice(lo, hi))
    vals = field_.values[tuple(sl)]
    sub = [a[s] - c for a, s, c in zip(field_.axes, sl, z)]
    grids = np.meshgrid(*sub, indexing="ij")
    r2 = sum(g * g for g in grids)
    phase = sum(zj * g for zj, g in zip(zeta, grids))
    packet = np.exp(-1j * k * phase - 0.5 * k * r2) * window(np.sqrt(r2), radius)
    dv = float(np.prod(h))
    return complex(k ** (len(z) / 4.0) * np.sum(vals * packet) * dv)


@dataclass
class Classification:
    z: np.ndarray              # (P, m)
    zeta: np.ndarray           # (P, m)
    magnitudes: np.ndarray     # (P, n_scales)
    exponents: np.ndarray      # (P,)
    flagged: np.ndarray        # (P,) bool
    wave_type: np.ndarray      # (P,) bool

    def rows(self):
        for z, zeta, e, f in zip(self.z, self.zeta, self.exponents, self.flagged):
            yield [*z, *zeta, e, int(f)]


def decay_exponent(ks: Sequence[float], magnitudes: Sequence[float], floor: float = 1e-300) -> float:
    """Slope of log|T| against log k; -inf when every value sits at machine zero."""
    m = np.asarray(magnitudes, dtype=float)
    if np.all(m <= floor):
        return -np.inf
    m = np.maximum(m, floor)
    return float(np.polyfit(np.log(ks), np.log(m), 1)[0])


def classify_wavefront(fields: Callable[[float], SampledField] | Sequence[SampledField], points: Sequence,
                       ks: Sequence[float], threshold: float = DEFAULT_THRESHOLD,
                       radius: float | None = None) -> Classification:
    """Fit the decay exponent at each (z, zeta) and flag exponents above ``threshold``.

    ``fields`` is either a list aligned with ``ks`` or a callable k -> SampledField.
    """
    ks = [float(k) for k in ks]
    if len(ks) < 3:
        raise ArgumentError("need at least 3 scales")
    samples = [fields(k) for k in ks] if callable(fields) else list(fields)
    if len(samples) != len(ks):
        raise ArgumentError("one sampled field per scale is required")
    zs = np.array([np.asarray(p[0], dtype=float) for p in points])
    zetas = np.array([np.asarray(p[1], dtype=float) for p in points])
    mags = np.zeros((len(points), len(ks)))
    for j, (k, f) in enumerate(zip(ks, samples)):
        for i, (z, zeta) in enumerate(zip(zs, zetas)):
            mags[i, j] = abs(wavepacket_transform(f, z, zeta, k, radius))
    expo = np.array([decay_exponent(ks, m) for m in mags])
    wave = np.abs(zetas[:, -1]) > 0
    return Classification(zs, zetas, mags, expo, expo > threshold, wave)


def write_classification_csv(path, result: Classification, header: str | None = None) -> None:
    m = result.z.shape[1]
    n = m - 1
    names = [f"x{i}" for i in range(n)] + ["t"] + [f"xi_{i}" for i in range(n)] + ["tau", "exponent", "flagged"]
    if n == 2:
        names = ["x", "y", "t", "xi_x", "xi_y", "tau", "exponent", "flagged"]
    with open(path, "w") as fh:
        if header:
            fh.write(header)
        fh.write(",".join(names) + "\n")
        for row in result.rows():
            fh.write(",".join(f"{v:.10g}" for v in row) + "\n")


# arrivals -------------------------------------------------------------------

def rms_envelope(trace, window_len: int = 8) -> np.ndarray:
    """Centered sliding RMS over ``window_len`` samples (zero padded at the ends)."""
    x = np.asarray(trace, dtype=float)
    sq = np.concatenate([np.zeros(window_len // 2), x * x, np.zeros(window_len - window_len // 2)])
    c = np.concatenate([[0.0], np.cumsum(sq)])
    return np.sqrt((c[window_len:window_len + len(x)] - c[:len(x)]) / window_len)


def pick_arrival(trace, threshold: float = 0.2, times=None, window_len: int = 8) -> float:
    """First time the sliding-RMS envelope reaches threshold * max(envelope).

    Returns the sample index when ``times`` is None.
    """
    if not 0 < threshold <= 1:
        raise ArgumentError("threshold must lie in (0, 1]")
    env = rms_envelope(trace, window_len)
    top = env.max()
    if not np.isfinite(top) or top <= 0:
        raise NoArrivalError("trace is identically zero")
    idx = int(np.argmax(env >= threshold * top * (1 - 1e-12)))
    return float(idx if times is None else np.asarray(times)[idx])
