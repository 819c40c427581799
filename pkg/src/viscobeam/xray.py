"""Time-parametrized X-ray transform along null rays and the kernel recovery pipeline.

Line integrals are taken in the flow parameter sigma (which equals travel
time), so on a homogeneous medium with speed sqrt(c) a chord of length L has
sigma-span L / sqrt(c).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.integrate import simpson

from .beams.ladder import RayData, memory_coefficients
from .beams.riccati import riccati_closed_form
from .errors import (ArgumentError, ConvergenceError, DegenerateBeamError, UnsupportedConfigurationError)
from .media import MemoryKernel, SoundSpeedField, read_grid_csv, write_grid_csv
from .rays import Disc, chord_family, chord_samples

NO_DATA = np.nan


@dataclass
class ChordSet:
    """Chords with sigma samples (odd count, uniform in sigma) and the points on them."""
    domain: Disc
    entries: np.ndarray        # (M, 2)
    directions: np.ndarray     # (M, 2)
    sigma: np.ndarray          # (M, S)
    points: np.ndarray         # (M, S, 2)
    n_angles: int = 0
    n_offsets: int = 0

    @property
    def count(self) -> int:
        return len(self.entries)

    @property
    def weights(self) -> np.ndarray:
        """Composite Simpson weights per chord, (M, S)."""
        S = self.sigma.shape[1]
        base = np.ones(S)
        base[1:-1:2] = 4.0
        base[2:-1:2] = 2.0
        h = (self.sigma[:, -1] - self.sigma[:, 0]) / (S - 1)
        return base[None, :] * h[:, None] / 3.0


def build_chords(field_: SoundSpeedField, domain: Disc, n_angles: int, n_offsets: int,
                 samples: int = 65) -> ChordSet:
    """Parallel-beam chord family traced through ``field_`` (straight chords for constant c)."""
    if samples < 3 or samples % 2 == 0:
        raise ArgumentError("Simpson sampling needs an odd count >= 3")
    entries, dirs = chord_family(domain, n_angles, n_offsets)
    M = len(entries)
    if field_.constant is not None:
        speed = np.sqrt(field_.constant)
        lengths = domain.chord_exit(entries, dirs)
        span = lengths / speed
        sig = span[:, None] * np.linspace(0.0, 1.0, samples)[None, :]
        pts = entries[:, None, :] + speed * sig[..., None] * dirs[:, None, :]
    else:
        sig = np.empty((M, samples))
        pts = np.empty((M, samples, 2))
        for i in range(M):
            sig[i], pts[i] = chord_samples(field_, domain, entries[i], dirs[i], samples)
    return ChordSet(domain, entries, dirs, sig, pts, n_angles, n_offsets)


@dataclass
class Sinogram:
    values: np.ndarray
    chords: ChordSet
    parametrization: str = "sigma"

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != (self.chords.count,):
            raise ArgumentError("one value per chord is required")

    def write_csv(self, path, header: str | None = None) -> None:
        with open(path, "w") as fh:
            if header:
                fh.write(header)
            fh.write("chord_id,value\n")
            for i, v in enumerate(np.real(self.values)):
                fh.write(f"{i},{v:.17g}\n")


@dataclass
class PixelGrid:
    """n x n pixels on the square [lo, hi]^2; values live at pixel centres."""
    n: int
    lo: float
    hi: float

    @property
    def h(self) -> float:
        return (self.hi - self.lo) / self.n

    def centers(self) -> np.ndarray:
        c = self.lo + self.h * (np.arange(self.n) + 0.5)
        return np.stack(np.meshgrid(c, c, indexing="ij"), axis=-1)

    @classmethod
    def covering(cls, domain: Disc, n: int) -> "PixelGrid":
        cx, cy = domain.center
        if abs(cx - cy) > 0:
            raise ArgumentError("pixel grids are square boxes centred on the diagonal")
        return cls(n, cx - domain.radius, cx + domain.radius)

    def stencil(self, points: np.ndarray):
        """Bilinear weights of pixel-centre values at points: (flat indices (P,4), weights (P,4))."""
        p = np.asarray(points, dtype=float).reshape(-1, 2)
        s = (p - self.lo) / self.h - 0.5
        s = np.clip(s, 0.0, self.n - 1.0)
        i0 = np.clip(np.floor(s).astype(int), 0, self.n - 2)
        f = s - i0
        idx, wts = [], []
        for di in (0, 1):
            for dj in (0, 1):
                w = (f[:, 0] if di else 1 - f[:, 0]) * (f[:, 1] if dj else 1 - f[:, 1])
                idx.append((i0[:, 0] + di) * self.n + (i0[:, 1] + dj))
                wts.append(w)
        return np.stack(idx, axis=1), np.stack(wts, axis=1)


@dataclass
class PixelField:
    grid: PixelGrid
    values: np.ndarray               # (n, n), NaN where uncovered
    residual: float = np.nan         # relative sinogram residual of the fit
    iterations: int = 0

    @property
    def mask(self) -> np.ndarray:
        return np.isfinite(self.values)

    def __call__(self, points) -> np.ndarray:
        """Bilinear interpolation; uncovered pixels count as 0 here."""
        pts = np.asarray(points, dtype=float)
        idx, w = self.grid.stencil(pts)
        v = np.nan_to_num(self.values.ravel(), nan=0.0)
        return np.sum(v[idx] * w, axis=1).reshape(pts.shape[:-1])

    def scaled(self, other: np.ndarray) -> "PixelField":
        return PixelField(self.grid, self.values * other, self.residual, self.iterations)

    def write_csv(self, path, header: str | None = None) -> None:
        h = self.grid.h
        x0 = self.grid.lo + 0.5 * h
        write_grid_csv(path, self.values.T, x0, x0, h, h, header=header)

    @classmethod
    def read_csv(cls, path) -> "PixelField":
        values, (x0, y0, dx, _dy) = read_grid_csv(path)
        n = values.shape[0]
        lo = x0 - 0.5 * dx
        return cls(PixelGrid(n, lo, lo + n * dx), values.T.copy())


def relative_error(recovered: PixelField, truth: np.ndarray) -> float:
    """Relative L2 error on the covered mask."""
    m = recovered.mask
    return float(np.linalg.norm(recovered.values[m] - truth[m]) / np.linalg.norm(truth[m]))


# forward ------------------------------------------------------------------------

def forward_transform(f: Callable[[np.ndarray], np.ndarray] | PixelField, chords: ChordSet,
                      field_: SoundSpeedField | None = None) -> Sinogram:
    """Per-chord Simpson integral of f(x(sigma)) d sigma.

    Chords leaving f's domain (points outside ``field_``'s box or where f is not
    finite) get the no-data marker.
    """
    vals = np.asarray(f(chords.points), dtype=float)
    bad = ~np.all(np.isfinite(vals), axis=1)
    if field_ is not None:
        bad |= ~np.all(field_.contains(chords.points), axis=1)
    out = simpson(np.where(np.isfinite(vals), vals, 0.0), x=chords.sigma, axis=1)
    out = np.where(bad, NO_DATA, out)
    return Sinogram(out, chords)


def forward_matrix(chords: ChordSet, grid: PixelGrid) -> sp.csr_matrix:
    """A[chord, pixel]: Simpson weights (sigma units) times bilinear interpolation weights."""
    M, S = chords.sigma.shape
    idx, w = grid.stencil(chords.points.reshape(-1, 2))
    rows = np.repeat(np.arange(M), S * 4)
    wts = (chords.weights.reshape(-1, 1) * w).ravel()
    A = sp.coo_matrix((wts, (rows, idx.ravel())), shape=(M, grid.n * grid.n))
    return A.tocsr()


def _difference_operator(mask: np.ndarray) -> sp.csr_matrix:
    """First differences between horizontally and vertically adjacent unknowns."""
    number = -np.ones(mask.shape, dtype=int)
    number[mask] = np.arange(mask.sum())
    rows, cols, vals = [], [], []
    r = 0
    for axis in (0, 1):
        a = number[:-1, :] if axis == 0 else number[:, :-1]
        b = number[1:, :] if axis == 0 else number[:, 1:]
        ok = (a >= 0) & (b >= 0)
        ia, ib = a[ok], b[ok]
        k = len(ia)
        rows.append(np.repeat(np.arange(r, r + k), 2))
        cols.append(np.stack([ia, ib], axis=1).ravel())
        vals.append(np.tile([-1.0, 1.0], k))
        r += k
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(r, int(mask.sum())))


def conjugate_gradient(apply, rhs: np.ndarray, precond: np.ndarray | None = None, tol: float = 1e-10,
                       max_iter: int = 10_000) -> tuple[np.ndarray, int]:
    """Preconditioned CG for a symmetric positive definite operator given as a callable."""
    x = np.zeros_like(rhs)
    r = rhs.copy()
    norm_b = np.linalg.norm(rhs)
    if norm_b == 0:
        return x, 0
    z = r * precond if precond is not None else r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = apply(p)
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if np.linalg.norm(r) <= tol * norm_b:
            return x, it
        z = r * precond if precond is not None else r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG did not converge in {max_iter} iterations")


def invert_transform(sinogram: Sinogram, grid: PixelGrid, lam: float = 1e-4, A: sp.csr_matrix | None = None,
                     tol: float = 1e-10, max_iter: int = 10_000) -> PixelField:
    """Minimize |A f - s|^2 + lam |D f|^2 over covered pixels by CG on the normal equations."""
    if lam < 0:
        raise ArgumentError("lambda must be non-negative")
    A = forward_matrix(sinogram.chords, grid) if A is None else A
    s = np.real(np.asarray(sinogram.values, dtype=complex))
    good = np.isfinite(s)
    A = A[good]
    s = s[good]
    cover = np.asarray(abs(A).sum(axis=0)).ravel() > 0
    mask = cover.reshape(grid.n, grid.n)
    Ac = A[:, cover]
    D = _difference_operator(mask)
    At = Ac.T.tocsr()
    Dt = D.T.tocsr()

    def normal(v):
        return At @ (Ac @ v) + lam * (Dt @ (D @ v))

    diag = np.asarray(Ac.multiply(Ac).sum(axis=0)).ravel() + lam * np.asarray(D.multiply(D).sum(axis=0)).ravel()
    sol, its = conjugate_gradient(normal, At @ s, 1.0 / diag, tol, max_iter)
    vals = np.full(grid.n * grid.n, NO_DATA)
    vals[cover] = sol
    ns = np.linalg.norm(s)
    resid = float(np.linalg.norm(Ac @ sol - s) / ns) if ns > 0 else float(np.linalg.norm(Ac @ sol))
    return PixelField(grid, vals.reshape(grid.n, grid.n), resid, its)


# beam amplitudes and kernel recovery --------------------------------------------

def amplitude_to_line_integral(a0_entry: complex, a0_exit: complex, history=None) -> complex:
    """log(a_exit / a_entry) = int b d sigma, with the branch continued along ``history``.

    ``history`` holds amplitude samples from entry to exit; without it the
    principal branch is used.
    """
    if a0_entry == 0 or a0_exit == 0:
        raise DegenerateBeamError("beam amplitude vanishes")
    if history is None:
        return complex(np.log(complex(a0_exit) / complex(a0_entry)))
    h = np.asarray(history, dtype=complex)
    if np.any(h == 0):
        raise DegenerateBeamError("beam amplitude vanishes along the ray")
    ang = np.unwrap(np.angle(h))
    mod = np.log(np.abs(h))
    return complex(mod[-1] - mod[0], ang[-1] - ang[0])


def isotropic_hessian(dim: int = 2, width: float = 1.0) -> np.ndarray:
    """H0 = i width I, which makes the beam data rotation covariant."""
    return 1j * width * np.eye(dim + 1)


def _straight_ray_data(field_: SoundSpeedField, kernel: MemoryKernel, chords: ChordSet, H0,
                       jet_order: int = 2) -> RayData:
    """Ray data for every sample of every chord in a homogeneous medium (stacked)."""
    if field_.constant is None:
        raise UnsupportedConfigurationError("straight-ray beam data needs a constant sound speed")
    c = float(field_.constant)
    M, S = chords.sigma.shape
    x = chords.points.reshape(-1, 2)
    xi = np.repeat(-chords.directions / np.sqrt(c), S, axis=0)
    sig = chords.sigma.ravel()
    H = riccati_closed_form(H0, c, sig)
    from .beams.ladder import _kernel_jet_gradients, _kernel_jets
    return RayData(sig, x, xi, np.ones(M * S), H, np.full(M * S, c), np.zeros((M * S, 2)),
                   _kernel_jets(kernel, x, jet_order), _kernel_jet_gradients(kernel, x, jet_order))


@dataclass
class BeamLineData:
    """Per-chord beam data: log amplitude ratio of a'_0 and a'_1/a'_0 at the exit."""
    log_ratio: Sinogram
    geometric: Sinogram
    ratio1: Sinogram | None = None
    H0: np.ndarray = field(default=None, repr=False)


def beam_line_data(field_: SoundSpeedField, kernel: MemoryKernel, chords: ChordSet, H0=None,
                   level: int = 0) -> BeamLineData:
    """Synthetic beam measurements on straight chords (constant c).

    log a'_0(exit)/a'_0(entry) = int b, b = -(box phi + G |xi|^2 / tau) / 2, and
    for level 1 the ratio a'_1/a'_0 at the exit, which solves r' = -nu_1 / 2.
    """
    H0 = isotropic_hessian() if H0 is None else H0
    data = _straight_ray_data(field_, kernel, chords, H0)
    M, S = chords.sigma.shape
    box = data.box_phi.reshape(M, S)
    mem = (data.jets[:, 0] * data.memory_weight).reshape(M, S)
    geo = simpson(-0.5 * box, x=chords.sigma, axis=1)
    total = geo + simpson(-0.5 * mem, x=chords.sigma, axis=1)
    out = BeamLineData(Sinogram(total, chords), Sinogram(geo, chords), None, H0)
    if level >= 1:
        nu = memory_coefficients(data, 1)[:, 0].reshape(M, S)
        out.ratio1 = Sinogram(simpson(-0.5 * nu, x=chords.sigma, axis=1), chords)
    return out


def geometric_term(field_: SoundSpeedField, chords: ChordSet, H0=None) -> Sinogram:
    """int -box phi / 2 d sigma per chord, the part of log a'_0 that does not involve G."""
    from .media import zero_kernel
    return beam_line_data(field_, zero_kernel(2), chords, H0).geometric


def recover_kernel_order0(line: Sinogram, field_: SoundSpeedField, geometric: Sinogram, grid: PixelGrid,
                          lam: float = 1e-4, A=None) -> PixelField:
    """G(., 0) from log amplitude ratios: int G/c = -2 (log ratio - geometric part)."""
    vals = -2.0 * (np.asarray(line.values) - np.asarray(geometric.values))
    g_over_c = invert_transform(Sinogram(np.real(vals), line.chords), grid, lam, A)
    return g_over_c.scaled(field_.value_fn(grid.centers()))


def order1_correction(order0: PixelField, field_: SoundSpeedField, chords: ChordSet, H0=None) -> np.ndarray:
    """Per-chord int G kappa_H d sigma - int grad G . xi d sigma with G from the order-0 result.

    kappa_H = 2 xi . H_xt - H_tt / c - tr H_xx.  On straight chords
    int grad G . xi = -(G(exit) - G(entry)) / c.
    """
    if field_.constant is None:
        raise UnsupportedConfigurationError("order-1 recovery is implemented for constant c only")
    c = float(field_.constant)
    H0 = isotropic_hessian() if H0 is None else H0
    M, S = chords.sigma.shape
    H = riccati_closed_form(H0, c, chords.sigma.ravel()).reshape(M, S, 3, 3)
    xi = -chords.directions / np.sqrt(c)
    kappa = (2 * np.einsum("mj,msj->ms", xi, H[:, :, :2, 2]) - H[:, :, 2, 2] / c
             - np.trace(H[:, :, :2, :2], axis1=-2, axis2=-1))
    G = order0(chords.points)
    weighted = simpson(G * kappa, x=chords.sigma, axis=1)
    ends = -(G[:, -1] - G[:, 0]) / c
    return weighted - ends


def recover_kernel_order1(ratio1: Sinogram, order0: PixelField, field_: SoundSpeedField, grid: PixelGrid,
                          lam: float = 1e-4, H0=None, A=None) -> PixelField:
    """d_t G(., 0) from a'_1/a'_0 at the chord exits: int G_t/c = 2 r_1 + correction, then times c."""
    if field_.constant is None:
        raise UnsupportedConfigurationError("order-1 recovery is implemented for constant c only")
    corr = order1_correction(order0, field_, ratio1.chords, H0)
    vals = 2.0 * np.asarray(ratio1.values) + corr
    gt_over_c = invert_transform(Sinogram(np.real(vals), ratio1.chords), grid, lam, A)
    return gt_over_c.scaled(field_.value_fn(grid.centers()))
