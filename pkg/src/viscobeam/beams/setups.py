"""Reference beam configurations shared by the acceptance checks, CLI and scripts."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..media import MemoryKernel, SoundSpeedField, exponential_kernel
from ..probe import Classification, SampledField, classify_wavefront
from ..rays import PhasePoint
from .quasimode import assemble_quasimode
from .ladder import AmplitudeLadder, build_ladder
from .riccati import BeamPhase, homogeneous_path, solve_riccati


@dataclass
class LensBeamConfig:
    """A long ray through c = 1 - 0.3 exp(-|x|^2) with a beam focused near the lens.

    H0 = (-i focus_width I - focus_distance C0)^{-1}, so in a homogeneous medium
    the waist would sit at flow time ``focus_distance``.  The residual window
    ``t_range`` is far from both ends of the ray.
    """
    lens_amplitude: float = 0.3
    start: tuple = (-10.0, 1.0)
    direction: tuple = (1.0, 0.0)
    span: float = 14.0
    focus_width: float = 4.0
    focus_distance: float = 8.0
    kernel_amplitude: float = 0.5
    kernel_rate: float = -1.0
    t_range: tuple = (9.0, 11.0)
    order: int = 1
    ks: tuple = (20.0, 40.0, 80.0, 160.0)
    bbox: tuple = field(default=((-12.0, 12.0), (-12.0, 12.0)))

    def medium(self) -> tuple[SoundSpeedField, MemoryKernel]:
        fld = SoundSpeedField.gaussian_lens(1.0, self.lens_amplitude, 1.0, bbox=self.bbox)
        return fld, exponential_kernel(self.kernel_amplitude, self.kernel_rate)

    def initial_hessian(self, c0: float) -> np.ndarray:
        C0 = np.diag([-c0, -c0, 1.0])
        H0 = np.linalg.inv(-1j * self.focus_width * np.eye(3) - self.focus_distance * C0)
        return 0.5 * (H0 + H0.T)

    def build(self) -> tuple[BeamPhase, AmplitudeLadder, MemoryKernel]:
        fld, ker = self.medium()
        start = PhasePoint.null_from_direction(fld, np.array(self.start), np.array(self.direction))
        H0 = self.initial_hessian(float(fld.value_fn(np.array(self.start))))
        if fld.constant is not None:
            path = homogeneous_path(fld, start, H0, self.span)
        else:
            path = solve_riccati(fld, start, H0, span=self.span)
        ladder = build_ladder(fld, ker, path, order=self.order)
        return BeamPhase(path, fld), ladder, ker


@dataclass
class ProbeSetup:
    """Beam family k u_k probed across the tube at one ray time.

    Query points sit at ``offsets`` multiples of ``offset_step`` along the
    spatial normal of the ray, with codirections rotated by ``angles`` away
    from the ray's (xi, 1).  Patches have a fixed physical ``radius``.
    """
    ks: tuple = (16.0, 32.0, 64.0)
    ray_time: float = 10.0
    radius: float = 0.5
    offset_step: float = 0.25
    offsets: tuple = (-3, -2, -1, 0, 1, 2, 3)
    angles: tuple = (0.0, np.pi / 4, np.pi / 2)
    samples_factor: float = 0.99


def classify_beam_family(cfg: LensBeamConfig, setup: ProbeSetup) -> tuple[Classification, list, float]:
    """Classification of the beam family, (offset, angle) per point, and the tube cell width.

    The cell is the Gaussian width 1/sqrt(k lambda_min(Im H_xx)) at the coarsest scale.
    """
    phase, ladder, _ = cfg.build()
    path = phase.path
    qms = {k: assemble_quasimode(phase, ladder, k) for k in setup.ks}
    z, zeta, H = (a[0] for a in path.state(np.array([setup.ray_time])))
    n = path.dim
    xi = zeta[:n]
    normal = np.array([-xi[1], xi[0]]) / np.linalg.norm(xi)
    lam_x = float(np.linalg.eigvalsh(H[:n, :n].imag)[0])
    cell = 1.0 / np.sqrt(min(setup.ks) * lam_x)
    base = np.arctan2(xi[1], xi[0])
    parts, meta = [], []
    for off in setup.offsets:
        zz = z.copy()
        zz[:n] += off * setup.offset_step * normal
        points = []
        for ang in setup.angles:
            th = base + ang
            direction = np.linalg.norm(xi) * np.array([np.cos(th), np.sin(th)])
            points.append((zz, np.append(direction, zeta[n])))
            meta.append((off * setup.offset_step, ang))

        # one patch per (position, k) serves every codirection at that position
        def fields(k, zz=zz):
            h = setup.samples_factor * 2 * np.pi / (6 * k)
            f = SampledField.from_function(qms[k].evaluate, zz, setup.radius, h)
            f.values = k * f.values
            return f
        parts.append(classify_wavefront(fields, points, setup.ks, radius=setup.radius))
    res = Classification(*(np.concatenate([getattr(p, name) for p in parts])
                           for name in ("z", "zeta", "magnitudes", "exponents", "flagged", "wave_type")))
    return res, meta, cell
