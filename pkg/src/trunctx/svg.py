"""Minimal SVG 1.1 line plots (axes, ticks, polylines) with no plotting dependency."""

from __future__ import annotations

from dataclasses import dataclass
from html import escape
from typing import Sequence

import numpy as np

__all__ = ["Series", "line_plot"]

WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 30, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e")


@dataclass(frozen=True)
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, count)


def _fmt(v: float) -> str:
    return f"{v:.1f}"


def line_plot(series: Sequence[Series], title: str, xlabel: str, ylabel: str,
              logy: bool = False) -> str:
    """Render the series as polylines; with ``logy`` the y values are plotted as log10."""
    clean = []
    for s in series:
        x = np.asarray(s.x, dtype=float)
        y = np.asarray(s.y, dtype=float)
        if logy:
            with np.errstate(divide="ignore", invalid="ignore"):
                y = np.log10(y)
        keep = np.isfinite(x) & np.isfinite(y)
        clean.append((s.label, x[keep], y[keep]))
    xs = np.concatenate([c[1] for c in clean]) if clean else np.array([0.0])
    ys = np.concatenate([c[2] for c in clean]) if clean else np.array([0.0])
    if xs.size == 0:
        xs = ys = np.array([0.0])
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def py(v):
        return TOP + (1 - (v - y0) / (y1 - y0)) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="14">'
        f'{escape(title)}</text>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_fmt(px(t))}" y1="{TOP + ph}" x2="{_fmt(px(t))}" '
                   f'y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px(t))}" y="{TOP + ph + 18}" text-anchor="middle" '
                   f'font-size="11">{t:.3g}</text>')
    for t in _ticks(y0, y1):
        label = f"1e{t:.2g}" if logy else f"{t:.3g}"
        out.append(f'<line x1="{LEFT - 5}" y1="{_fmt(py(t))}" x2="{LEFT}" '
                   f'y2="{_fmt(py(t))}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{_fmt(py(t) + 4)}" text-anchor="end" '
                   f'font-size="11">{escape(label)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle" '
               f'font-size="12">{escape(xlabel)}</text>')
    out.append(f'<text x="15" y="{TOP + ph / 2:.1f}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 15 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (label, x, y) in enumerate(clean):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(x, y))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        out.append(f'<text x="{LEFT + pw - 5}" y="{TOP + 15 + 15 * i}" text-anchor="end" '
                   f'font-size="11" fill="{color}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
