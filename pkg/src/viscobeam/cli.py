"""Command-line entry point: one subcommand per pipeline.

Exit codes: 0 success, 1 failed verification, 2 configuration error,
3 numerical error, 64 usage error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, NumericalError
from .io import config_hash, header_text, write_json, write_table

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2, 3, 64
SUBCOMMANDS = ("simulate", "trace", "lens", "beam", "residual-scan", "probe", "xray",
               "recover-kernel", "emm-recover", "verify")

log = logging.getLogger("viscobeam")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _load_json(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise ConfigurationError(f"configuration file {p} does not exist")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{p}: {exc}") from exc


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _settings(args) -> dict:
    """Arguments that determine the outputs (used for the config hash)."""
    skip = {"func", "threads", "out", "verbose"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _header(args, extra: dict | None = None) -> str:
    cfg = _settings(args)
    if extra:
        cfg = {**cfg, "config": extra}
    return header_text(cfg, getattr(args, "seed", None), args.command)


def _apply_threads(n: int | None) -> None:
    if n is None:
        env = os.environ.get("VISCOBEAM_THREADS")
        n = int(env) if env else None
    if n is None:
        return
    if n < 1:
        raise ConfigurationError("--threads must be >= 1")
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ[var] = str(n)
    try:
        from threadpoolctl import threadpool_limits
        threadpool_limits(n)
    except ImportError:
        log.debug("threadpoolctl not available; BLAS thread count set through the environment only")


# subcommands ----------------------------------------------------------------

def cmd_simulate(args) -> int:
    from .fdtd import load_run_config, simulate, write_traces_binary, write_traces_csv
    raw = _load_json(args.config)
    if args.duration is not None:
        raw.setdefault("grid", {})["duration"] = args.duration
        raw["grid"].pop("dt", None)
    cfg = load_run_config(raw)
    res = simulate(cfg.field, cfg.kernel, cfg.grid, cfg.source, cfg.receivers, record_energy=args.energy)
    out = _outdir(args)
    head = _header(args, raw)
    write_traces_csv(out / "traces.csv", res.times, res.traces, header=head)
    write_traces_binary(out / "traces.bin", res.times, res.traces)
    if args.energy:
        write_table(out / "energy.csv", ["step", "energy"], enumerate(res.energy), header=head)
    print(f"{cfg.grid.steps} steps, {len(cfg.receivers)} receivers -> {out}")
    return EXIT_OK


def _field_arg(args, bbox=((-2.0, 2.0), (-2.0, 2.0))):
    from .fdtd import field_from_config
    if args.field_config:
        return field_from_config(_load_json(args.field_config), bbox)
    if args.lens_amplitude:
        return field_from_config({"type": "gaussian_lens", "amplitude": args.lens_amplitude,
                                  "background": args.speed, "width": args.lens_width}, bbox)
    return field_from_config({"type": "constant", "value": args.speed}, bbox)


def cmd_trace(args) -> int:
    from .rays import PhasePoint, trace_bicharacteristic
    fld = _field_arg(args, ((-args.box, args.box),) * 2)
    start = PhasePoint.null_from_direction(fld, args.start, args.direction)
    ray = trace_bicharacteristic(fld, start, args.span, tol=args.tol)
    out = _outdir(args)
    rows = np.column_stack([ray.sigma, ray.z, ray.zeta])
    write_table(out / "ray.csv", ["sigma", "x", "y", "t", "xi_x", "xi_y", "tau"], rows, header=_header(args))
    print(f"{len(ray.sigma)} samples, Hamiltonian drift {ray.hamiltonian_drift(fld):.2e}")
    return EXIT_OK


def cmd_lens(args) -> int:
    from .rays import Disc, chord_family, lens_data, write_lens_csv
    fld = _field_arg(args, ((-1.5 * args.radius, 1.5 * args.radius),) * 2)
    disc = Disc((0.0, 0.0), args.radius)
    entries, dirs = chord_family(disc, args.angles, args.offsets)
    records = [lens_data(fld, disc, e, d) for e, d in zip(entries, dirs)]
    out = _outdir(args)
    write_lens_csv(out / "lens.csv", records, header=_header(args))
    times = [r.travel_time for r in records]
    print(f"{len(records)} rays, travel time range {min(times):.6f} .. {max(times):.6f}")
    return EXIT_OK


def _beam_config(args):
    from .beams.setups import LensBeamConfig
    raw = _load_json(getattr(args, "config", None))
    names = {f.name for f in dataclasses.fields(LensBeamConfig)}
    unknown = set(raw) - names
    if unknown:
        raise ConfigurationError(f"unknown beam configuration keys {sorted(unknown)}")
    cfg = LensBeamConfig(**{k: tuple(v) if isinstance(v, list) else v for k, v in raw.items()})
    return cfg, raw


def cmd_beam(args) -> int:
    from .beams.quasimode import beam_summary
    cfg, raw = _beam_config(args)
    _, ladder, _ = cfg.build()
    out = _outdir(args)
    info = {"command": "beam", "config_hash": config_hash({**_settings(args), "config": raw}), "seed": args.seed}
    write_json(out / "beam.json", beam_summary(ladder, args.samples), info)
    print(f"beam summary -> {out / 'beam.json'}")
    return EXIT_OK


def cmd_residual_scan(args) -> int:
    from .beams.quasimode import assemble_quasimode, beam_residual, fitted_slope, residual_grid
    from .svg import PlotSpec, render_svg
    ks = args.ks
    cols = {}
    if args.construction == "go":
        from .beams.geometric import geometrical_optics_build
        from .media import SoundSpeedField, exponential_kernel
        fld = SoundSpeedField.homogeneous(args.speed)
        ker = exponential_kernel(args.kernel_amplitude, args.kernel_rate)
        for order in args.orders:
            sol = geometrical_optics_build(fld, ker, [1.0, 0.0], order)
            cols[f"order_{order}"] = [sol.residual_norm(k, T=args.duration) for k in ks]
    else:
        cfg, _ = _beam_config(args)
        if max(args.orders) > 1:
            raise ConfigurationError("beam residual scans support amplitude orders 0 and 1")
        cfg.order = max(args.orders)
        phase, ladder, kernel = cfg.build()
        for k in ks:
            h = 1.0 / (-1j * k)
            sets = [lambda s, o=o, h=h: sum(h ** j * ladder.levels[j](s) for j in range(o + 1)) for o in args.orders]
            res = beam_residual(assemble_quasimode(phase, ladder, k), kernel, residual_grid(phase, k, cfg.t_range),
                                sets)
            for o, v in zip(args.orders, res.norms):
                cols.setdefault(f"order_{o}", []).append(v)
    out = _outdir(args)
    names = ["k", *cols]
    table = out / "residual_scan.csv"
    head = _header(args)
    write_table(table, names, np.column_stack([ks, *cols.values()]), header=head)
    render_svg(table, PlotSpec("k", list(cols), loglog=True, title=f"{args.construction} residual"),
               out / "residual_scan.svg", header=head)
    for name, vals in cols.items():
        print(f"{name}: slope {fitted_slope(ks, vals):.3f}")
    return EXIT_OK


def cmd_probe(args) -> int:
    from .beams.setups import ProbeSetup, classify_beam_family
    from .probe import write_classification_csv
    from .svg import render_heatmap
    cfg, raw = _beam_config(args)
    cfg.order = 0
    setup = ProbeSetup(ks=tuple(args.ks), ray_time=args.ray_time, radius=args.radius)
    res, _, cell = classify_beam_family(cfg, setup)
    out = _outdir(args)
    head = _header(args, raw)
    write_classification_csv(out / "classification.csv", res, header=head)
    render_heatmap(out / "classification.csv", "y", "xi_y", "exponent", out / "classification.svg",
                   title="decay exponent", header=head)
    print(f"{int(res.flagged.sum())} of {len(res.flagged)} points flagged (tube cell {cell:.3f})")
    return EXIT_OK


def _phantom(width: float):
    return lambda x: np.exp(-width * np.sum(np.asarray(x) ** 2, axis=-1))


def cmd_xray(args) -> int:
    from .media import SoundSpeedField
    from .rays import Disc
    from .xray import (PixelGrid, build_chords, forward_matrix, forward_transform, invert_transform,
                       relative_error)
    fld = SoundSpeedField.homogeneous(args.speed)
    disc = Disc()
    chords = build_chords(fld, disc, args.angles, args.offsets)
    grid = PixelGrid.covering(disc, args.pixels)
    f = _phantom(args.phantom_width)
    sino = forward_transform(f, chords, fld)
    rec = invert_transform(sino, grid, args.lam, forward_matrix(chords, grid))
    out = _outdir(args)
    head = _header(args)
    sino.write_csv(out / "sinogram.csv", header=head)
    rec.write_csv(out / "reconstruction.csv", header=head)
    print(f"relative error {relative_error(rec, f(grid.centers())):.3%}, sinogram residual {rec.residual:.2e}")
    return EXIT_OK


def cmd_recover_kernel(args) -> int:
    from .fdtd import kernel_from_config
    from .media import SoundSpeedField
    from .rays import Disc
    from .xray import (PixelGrid, beam_line_data, build_chords, forward_matrix, recover_kernel_order0,
                       recover_kernel_order1)
    raw = _load_json(args.kernel_config) if args.kernel_config else {
        "type": "exponential", "amplitude": args.kernel_amplitude, "rate": args.kernel_rate}
    kernel = kernel_from_config(raw, 2)
    fld = SoundSpeedField.homogeneous(args.speed)
    disc = Disc()
    chords = build_chords(fld, disc, args.angles, args.offsets)
    grid = PixelGrid.covering(disc, args.pixels)
    A = forward_matrix(chords, grid)
    data = beam_line_data(fld, kernel, chords, level=args.order)
    out = _outdir(args)
    head = _header(args, raw)
    r0 = recover_kernel_order0(data.log_ratio, fld, data.geometric, grid, args.lam, A)
    r0.write_csv(out / "kernel_order0.csv", header=head)
    msg = f"order 0: residual {r0.residual:.2e}"
    if args.order >= 1:
        r1 = recover_kernel_order1(data.ratio1, r0, fld, grid, args.lam, A=A)
        r1.write_csv(out / "kernel_order1.csv", header=head)
        msg += f"; order 1: residual {r1.residual:.2e}"
    print(msg)
    return EXIT_OK


def cmd_emm_recover(args) -> int:
    from .emm import recover_batch, recover_parameters
    if args.input:
        if not args.out:
            raise ConfigurationError("batch mode needs --out")
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        if not Path(args.input).exists():
            raise ConfigurationError(f"input file {args.input} does not exist")
        failed = recover_batch(args.input, out, args.n, header=_header(args))
        print(f"batch written to {out} ({failed} failed rows)")
        return EXIT_OK
    if args.moments is None:
        raise ConfigurationError("give --moments or --input")
    fit = recover_parameters(args.moments, args.n)
    fmt = ", ".join
    print(f"alpha = ({fmt(f'{a:.10g}' for a in fit.alphas)})")
    print(f"beta = ({fmt(f'{b:.10g}' for b in fit.betas)})")
    print(f"cond = {fit.cond:.3e}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .acceptance import CHECKS, run_all
    ids = args.only or sorted(CHECKS)
    bad = [i for i in ids if i not in CHECKS]
    if bad:
        raise ConfigurationError(f"unknown criteria {bad}")
    results = run_all(ids, echo=print)
    if args.out:
        out = _outdir(args)
        rows = [[r.id, int(r.passed), r.elapsed, r.limit] for r in results]
        write_table(out / "verify.csv", ["criterion", "passed", "seconds", "limit"], rows, header=_header(args))
    failed = [r.id for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} criteria passed")
    return EXIT_FAILED if failed else EXIT_OK


# parser ---------------------------------------------------------------------

def _field_flags(p):
    p.add_argument("--speed", type=float, default=1.0, help="background c (speed squared)")
    p.add_argument("--lens-amplitude", type=float, default=0.0, help="Gaussian lens depth (0: homogeneous)")
    p.add_argument("--lens-width", type=float, default=1.0)
    p.add_argument("--field-config", help="JSON field description (overrides the flags)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="viscobeam", description="Viscoacoustic waves with memory.")
    p.add_argument("--threads", type=int, default=None, help="worker cap (fallback: VISCOBEAM_THREADS)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("simulate", help="FDTD run from a JSON configuration")
    s.add_argument("--config", required=True)
    s.add_argument("--duration", type=float, default=None, help="override grid.duration")
    s.add_argument("--energy", action="store_true", help="record the discrete energy")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("trace", help="trace one bicharacteristic")
    _field_flags(s)
    s.add_argument("--start", type=_floats, default=[-1.5, 0.0])
    s.add_argument("--direction", type=_floats, default=[1.0, 0.0])
    s.add_argument("--span", type=float, default=2.0)
    s.add_argument("--box", type=float, default=4.0, help="half width of the field's bounding box")
    s.add_argument("--tol", type=float, default=1e-10)
    s.set_defaults(func=cmd_trace)

    s = sub.add_parser("lens", help="lens data for a parallel chord family on a disc")
    _field_flags(s)
    s.add_argument("--radius", type=float, default=1.0)
    s.add_argument("--angles", type=int, default=8)
    s.add_argument("--offsets", type=int, default=8)
    s.set_defaults(func=cmd_lens)

    s = sub.add_parser("beam", help="Gaussian beam summary on the lens")
    s.add_argument("--config", help="JSON with LensBeamConfig fields")
    s.add_argument("--samples", type=int, default=101)
    s.set_defaults(func=cmd_beam)

    s = sub.add_parser("residual-scan", help="residual norms against k with fitted slopes")
    s.add_argument("--construction", choices=("go", "beam"), default="go")
    s.add_argument("--orders", type=_ints, default=[1, 2])
    s.add_argument("--ks", type=_floats, default=[20.0, 40.0, 80.0, 160.0])
    s.add_argument("--config", help="beam configuration JSON (beam construction)")
    s.add_argument("--speed", type=float, default=1.0)
    s.add_argument("--kernel-amplitude", type=float, default=0.5)
    s.add_argument("--kernel-rate", type=float, default=-1.0)
    s.add_argument("--duration", type=float, default=2.0, help="time window for the GO residual")
    s.set_defaults(func=cmd_residual_scan)

    s = sub.add_parser("probe", help="wave-packet classification of a beam family")
    s.add_argument("--config", help="beam configuration JSON")
    s.add_argument("--ks", type=_floats, default=[16.0, 32.0, 64.0])
    s.add_argument("--ray-time", type=float, default=10.0)
    s.add_argument("--radius", type=float, default=0.5)
    s.set_defaults(func=cmd_probe)

    s = sub.add_parser("xray", help="Gaussian phantom X-ray round trip")
    s.add_argument("--speed", type=float, default=1.0)
    s.add_argument("--phantom-width", type=float, default=4.0, help="f = exp(-w |x|^2)")
    s.add_argument("--angles", type=int, default=180)
    s.add_argument("--offsets", type=int, default=64)
    s.add_argument("--pixels", type=int, default=64)
    s.add_argument("--lam", type=float, default=1e-4)
    s.set_defaults(func=cmd_xray)

    s = sub.add_parser("recover-kernel", help="kernel jets at t = 0 from synthetic beam data")
    s.add_argument("--order", type=int, choices=(0, 1), default=1)
    s.add_argument("--kernel-config", help="JSON kernel description")
    s.add_argument("--kernel-amplitude", type=float, default=0.5)
    s.add_argument("--kernel-rate", type=float, default=-1.0)
    s.add_argument("--speed", type=float, default=1.0)
    s.add_argument("--angles", type=int, default=180)
    s.add_argument("--offsets", type=int, default=64)
    s.add_argument("--pixels", type=int, default=64)
    s.add_argument("--lam", type=float, default=1e-4)
    s.set_defaults(func=cmd_recover_kernel)

    s = sub.add_parser("emm-recover", help="EMM parameters from moments")
    s.add_argument("--moments", type=_floats)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--input", help="batch CSV (x, y, m0..m_{2N-1})")
    s.set_defaults(func=cmd_emm_recover)

    s = sub.add_parser("verify", help="run the acceptance suite")
    s.add_argument("--only", type=_ints, default=None, help="criterion ids, e.g. 1,4,10")
    s.set_defaults(func=cmd_verify)

    for name, sp in sub.choices.items():
        sp.add_argument("--seed", type=int, default=0, help="recorded in output headers")
        sp.add_argument("--out", default=None if name in ("verify", "emm-recover") else "out",
                        help="output directory (emm-recover batch: output file)")
    return p


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(str(exc))
        return EXIT_USAGE
    if args.command is None:
        sys.stderr.write(parser.format_help())
        return EXIT_USAGE
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        _apply_threads(args.threads)
        if args.command == "emm-recover" and args.n is None and args.moments is not None:
            args.n = len(args.moments) // 2
        if args.command == "emm-recover" and args.input and args.n is None:
            raise ConfigurationError("batch mode needs --n")
        return args.func(args)
    except ConfigurationError as exc:
        sys.stderr.write(f"configuration error: {exc}\n")
        return EXIT_CONFIG
    except NumericalError as exc:
        sys.stderr.write(f"numerical error: {exc}\n")
        return EXIT_NUMERIC


def main(argv=None) -> None:
    sys.exit(dispatch(argv))


if __name__ == "__main__":
    main()
