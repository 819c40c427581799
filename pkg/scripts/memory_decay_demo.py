"""Plane pulse in 1D with an exponential memory kernel.

Prints the pulse peak against the high-frequency prediction exp(-G(0) t / 2c)
and writes decay.csv / decay.svg into the output directory (default: out/).
"""
import sys
from pathlib import Path

import numpy as np

from viscobeam.fdtd import SimGrid, simulate
from viscobeam.io import header_text, write_table
from viscobeam.media import ExpSumKernel, SoundSpeedField
from viscobeam.svg import PlotSpec, render_svg

G0, RATE, WIDTH, DURATION = 0.5, -1.0, 0.03, 2.0


def main(out="out"):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    field = SoundSpeedField.homogeneous(1.0, ((-1.5, 3.5),))
    grid = SimGrid.from_cfl((4001,), (-1.5,), (3.5,), 1.0, 0.5, DURATION)
    u0 = lambda x: np.exp(-(x[..., 0] / WIDTH) ** 2)
    v0 = lambda x: 2 * x[..., 0] / WIDTH**2 * u0(x)
    steps = range(0, grid.steps + 1, grid.steps // 20)
    res = simulate(field, ExpSumKernel([G0], [RATE], dim=1), grid, u0=u0, v0=v0, snapshot_steps=steps)
    rows = []
    for n, snap in sorted(res.snapshots.items()):
        t = n * grid.dt
        rows.append([t, snap.max(), np.exp(-G0 * t / 2)])
        print(f"t = {t:5.2f}  peak {rows[-1][1]:.5f}  predicted {rows[-1][2]:.5f}")
    head = header_text({"G0": G0, "rate": RATE, "width": WIDTH, "duration": DURATION}, command="memory_decay_demo")
    write_table(out / "decay.csv", ["t", "peak", "predicted"], rows, header=head)
    render_svg(out / "decay.csv", PlotSpec("t", ["peak", "predicted"], title="plane pulse peak"),
               out / "decay.svg", header=head)


if __name__ == "__main__":
    main(*sys.argv[1:])
