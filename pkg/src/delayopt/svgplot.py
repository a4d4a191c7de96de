"""Minimal static SVG line plots with a logarithmic y axis."""

from __future__ import annotations

import math
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Series", "line_plot"]

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]
WIDTH, HEIGHT = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 80, 180, 40, 60
FLOOR = 1e-300


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    se: np.ndarray | None = None
    dashed: bool = False


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def line_plot(series: list[Series], xlabel: str, ylabel: str, title: str = "") -> str:
    """Render the series (mean with an optional standard-error band) as SVG text."""
    if not series:
        raise ValueError("nothing to plot")
    xs = np.concatenate([np.asarray(s.x, float) for s in series])
    logs = []
    for s in series:
        y = np.asarray(s.y, float)
        lo = y if s.se is None else y - np.asarray(s.se, float)
        hi = y if s.se is None else y + np.asarray(s.se, float)
        for arr in (y, lo, hi):
            ok = np.isfinite(arr) & (arr > 0)
            if ok.any():
                logs.append(np.log10(arr[ok]))
    ymin, ymax = (float(np.min(np.concatenate(logs))), float(np.max(np.concatenate(logs)))) if logs else (0.0, 1.0)
    ymin, ymax = math.floor(ymin), math.ceil(ymax)
    if ymax <= ymin:
        ymax = ymin + 1
    x0, x1 = float(np.nanmin(xs)), float(np.nanmax(xs))
    if x1 <= x0:
        x1 = x0 + 1.0
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (np.asarray(x, float) - x0) / (x1 - x0) * pw

    def py(ly):
        return TOP + (ymax - np.asarray(ly, float)) / (ymax - ymin) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    step = max(1, (ymax - ymin) // 8)
    for e in range(ymin, ymax + 1, step):
        y = _fmt(py(e))
        out.append(f'<line x1="{LEFT}" y1="{y}" x2="{LEFT + pw}" y2="{y}" stroke="#dddddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{y}" font-size="11" text-anchor="end" dominant-baseline="middle">1e{e}</text>')
    for k in range(6):
        xv = x0 + (x1 - x0) * k / 5
        x = _fmt(px(xv))
        out.append(f'<text x="{x}" y="{TOP + ph + 16}" font-size="11" text-anchor="middle">{xv:.4g}</text>')
    out.append(f'<text x="{LEFT + pw / 2}" y="{HEIGHT - 15}" font-size="13" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{TOP + ph / 2}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 18 {TOP + ph / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{LEFT + pw / 2}" y="{TOP - 14}" font-size="14" text-anchor="middle">{escape(title)}</text>')
    for k, s in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        x = np.asarray(s.x, float)
        y = np.asarray(s.y, float)
        ok = np.isfinite(x) & np.isfinite(y) & (y > 0)
        if s.se is not None:
            se = np.asarray(s.se, float)
            lo = np.maximum(y - se, np.maximum(y * 1e-3, FLOOR))
            hi = y + se
            good = ok & np.isfinite(se)
            if good.sum() > 1:
                top = [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px(x[good]), py(np.log10(hi[good])))]
                bot = [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px(x[good])[::-1], py(np.log10(lo[good]))[::-1])]
                out.append(f'<polygon points="{" ".join(top + bot)}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px(x[ok]), py(np.log10(y[ok]))))
        dash = ' stroke-dasharray="6,4"' if s.dashed else ""
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.8"{dash}/>')
        ly = TOP + 14 + 20 * k
        lx = LEFT + pw + 12
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 24}" y2="{ly}" stroke="{color}" stroke-width="2"{dash}/>')
        out.append(f'<text x="{lx + 30}" y="{ly}" font-size="11" dominant-baseline="middle">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
