"""Deterministic SVG line plots and heatmaps without a plotting dependency."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError
from .io import read_table

WIDTH, HEIGHT = 800, 600
MARGIN = (80, 40, 40, 70)          # left, right, top, bottom
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


@dataclass
class PlotSpec:
    x: str
    y: list = field(default_factory=list)
    loglog: bool = False
    title: str = ""


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _ticks(lo: float, hi: float, n: int = 5) -> np.ndarray:
    return np.linspace(lo, hi, n)


def _frame(title: str, xlabel: str, ylabel: str, xr, yr, log: bool) -> list[str]:
    l, r, t, b = MARGIN
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{l}" y="{t}" width="{WIDTH - l - r}" height="{HEIGHT - t - b}" fill="none" stroke="black"/>']
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="{t - 12}" text-anchor="middle" font-size="14">{_esc(title)}</text>')
    for v in _ticks(*xr):
        px = _px(v, xr)
        lab = _fmt(10 ** v) if log else _fmt(v)
        out.append(f'<line x1="{px:.2f}" y1="{HEIGHT - b}" x2="{px:.2f}" y2="{HEIGHT - b + 5}" stroke="black"/>')
        out.append(f'<text x="{px:.2f}" y="{HEIGHT - b + 20}" text-anchor="middle">{lab}</text>')
    for v in _ticks(*yr):
        py = _py(v, yr)
        lab = _fmt(10 ** v) if log else _fmt(v)
        out.append(f'<line x1="{l - 5}" y1="{py:.2f}" x2="{l}" y2="{py:.2f}" stroke="black"/>')
        out.append(f'<text x="{l - 8}" y="{py + 4:.2f}" text-anchor="end">{lab}</text>')
    out.append(f'<text x="{(l + WIDTH - r) / 2}" y="{HEIGHT - 20}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="20" y="{(t + HEIGHT - b) / 2}" text-anchor="middle" '
               f'transform="rotate(-90 20 {(t + HEIGHT - b) / 2})">{_esc(ylabel)}</text>')
    return out


def _px(v, xr):
    l, r, _, _ = MARGIN
    return l + (v - xr[0]) / (xr[1] - xr[0]) * (WIDTH - l - r)


def _py(v, yr):
    _, _, t, b = MARGIN
    return HEIGHT - b - (v - yr[0]) / (yr[1] - yr[0]) * (HEIGHT - t - b)


def _range(v: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi - lo < 1e-12 * max(1.0, abs(hi)):
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def line_plot_svg(x: np.ndarray, series: dict, spec: PlotSpec) -> str:
    """SVG text for one polyline per series; log-log mode annotates fitted slopes."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    if spec.loglog:
        if np.any(x <= 0) or any(np.any(v <= 0) for v in ys.values()):
            raise ArgumentError("log-log plot needs positive data")
        x = np.log10(x)
        ys = {k: np.log10(v) for k, v in ys.items()}
    xr = _range(x)
    yr = _range(np.concatenate(list(ys.values())))
    out = _frame(spec.title, spec.x, ", ".join(ys), xr, yr, spec.loglog)
    for i, (name, y) in enumerate(ys.items()):
        col = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_px(a, xr):.2f},{_py(b, yr):.2f}" for a, b in zip(x, y))
        out.append(f'<polyline points="{pts}" fill="none" stroke="{col}" stroke-width="2"/>')
        for a, b in zip(x, y):
            out.append(f'<circle cx="{_px(a, xr):.2f}" cy="{_py(b, yr):.2f}" r="3" fill="{col}"/>')
        label = name
        if spec.loglog and len(x) >= 2:
            slope = float(np.polyfit(x, y, 1)[0])
            label = f"{name}: slope {slope:.3f}"
        out.append(f'<text x="{MARGIN[0] + 12}" y="{MARGIN[2] + 20 + 18 * i}" fill="{col}">{_esc(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _color(v: float, lo: float, hi: float) -> str:
    s = 0.5 if hi <= lo else (v - lo) / (hi - lo)
    s = min(max(s, 0.0), 1.0)
    r = int(round(255 * s))
    bl = int(round(255 * (1 - s)))
    return f"#{r:02x}40{bl:02x}"


def heatmap_svg(x: np.ndarray, y: np.ndarray, value: np.ndarray, xlabel: str, ylabel: str, title: str = "") -> str:
    """Scattered values drawn as colored cells on an (x, y) frame."""
    x, y, value = (np.asarray(a, dtype=float) for a in (x, y, value))
    finite = np.isfinite(value)
    lo, hi = (float(value[finite].min()), float(value[finite].max())) if finite.any() else (0.0, 1.0)
    xr, yr = _range(x), _range(y)
    ux, uy = np.unique(x), np.unique(y)
    wx = (np.min(np.diff(ux)) if len(ux) > 1 else 1.0)
    wy = (np.min(np.diff(uy)) if len(uy) > 1 else 1.0)
    pw = abs(_px(wx, xr) - _px(0.0, xr))
    ph = abs(_py(wy, yr) - _py(0.0, yr))
    out = _frame(title, xlabel, ylabel, xr, yr, False)
    for a, b, v in zip(x, y, value):
        col = _color(v, lo, hi) if np.isfinite(v) else "#000000"
        out.append(f'<rect x="{_px(a, xr) - pw / 2:.2f}" y="{_py(b, yr) - ph / 2:.2f}" '
                   f'width="{pw:.2f}" height="{ph:.2f}" fill="{col}"/>')
    out.append(f'<text x="{WIDTH - MARGIN[1]}" y="{HEIGHT - 20}" text-anchor="end">'
               f'range {_fmt(lo)} .. {_fmt(hi)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _comment(header: str | None) -> str:
    """'#' header lines as an XML comment placed before the <svg> element."""
    if not header:
        return ""
    body = "\n".join(ln.lstrip("# ").replace("--", "- -") for ln in header.strip().splitlines())
    return f"<!--\n{body}\n-->\n"


def render_svg(table_path, spec: PlotSpec, out_path, header: str | None = None) -> Path:
    """Plot columns of a CSV table; nothing is written when the table is empty."""
    names, data = read_table(table_path)
    if len(data) == 0:
        raise ArgumentError(f"{table_path}: table has no rows")
    ycols = spec.y or [n for n in names if n != spec.x][:1]
    for col in [spec.x, *ycols]:
        if col not in names:
            raise ArgumentError(f"column {col!r} not in {names}")
    x = data[:, names.index(spec.x)]
    series = {c: data[:, names.index(c)] for c in ycols}
    text = _comment(header) + line_plot_svg(x, series, spec)
    out = Path(out_path)
    out.write_text(text)
    return out


def render_heatmap(table_path, x: str, y: str, value: str, out_path, title: str = "",
                   header: str | None = None) -> Path:
    names, data = read_table(table_path)
    if len(data) == 0:
        raise ArgumentError(f"{table_path}: table has no rows")
    for col in (x, y, value):
        if col not in names:
            raise ArgumentError(f"column {col!r} not in {names}")
    text = _comment(header) + heatmap_svg(data[:, names.index(x)], data[:, names.index(y)], data[:, names.index(value)], x, y, title)
    out = Path(out_path)
    out.write_text(text)
    return out
