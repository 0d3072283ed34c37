"""Small self-contained SVG line charts: stacked panels sharing the x axis."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf", "#7f7f7f")


@dataclass
class Series:
    label: str
    x: np.ndarray
    y: np.ndarray
    dashed: bool = False
    step: bool = False


@dataclass
class Panel:
    ylabel: str
    series: list = field(default_factory=list)
    hlines: list = field(default_factory=list)  # (y, label)


def nice_ticks(lo, hi, n=5):
    if not (math.isfinite(lo) and math.isfinite(hi)):
        return [0.0]
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks, t = [], start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _fmt(v):
    return f"{v:.6g}"


def line_chart(panels, xlabel, title="", annotations=(), width=720, panel_height=220):
    """Render ``panels`` (top to bottom) as one SVG document string."""
    left, right, top, gap, bottom = 70, 170, 40 if title else 20, 40, 45
    H = top + len(panels) * panel_height + (len(panels) - 1) * gap + bottom
    plot_w = width - left - right
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{H}" viewBox="0 0 {width} {H}" '
        'font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{H}" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    xs = [np.asarray(s.x, dtype=float) for p in panels for s in p.series]
    xmin = min((float(x.min()) for x in xs if x.size), default=0.0)
    xmax = max((float(x.max()) for x in xs if x.size), default=1.0)
    if xmax <= xmin:
        xmax = xmin + 1.0
    colour = {}
    for k, p in enumerate(panels):
        y0 = top + k * (panel_height + gap)
        ys = [np.asarray(s.y, dtype=float) for s in p.series] + [np.array([h[0] for h in p.hlines])]
        finite = np.concatenate([y[np.isfinite(y)] for y in ys if y.size] or [np.zeros(1)])
        ymin, ymax = float(finite.min()), float(finite.max())
        pad = 0.05 * (ymax - ymin) if ymax > ymin else 0.5
        ymin, ymax = ymin - pad, ymax + pad

        def X(v):
            return left + (v - xmin) / (xmax - xmin) * plot_w

        def Y(v, y0=y0, ymin=ymin, ymax=ymax):
            return y0 + panel_height - (v - ymin) / (ymax - ymin) * panel_height

        parts.append(f'<g class="panel" id="panel{k}">')
        parts.append(f'<rect x="{left}" y="{y0}" width="{plot_w}" height="{panel_height}" fill="none" stroke="#333"/>')
        for t in nice_ticks(ymin, ymax):
            if ymin <= t <= ymax:
                yy = Y(t)
                parts.append(f'<line x1="{left - 4}" y1="{yy:.2f}" x2="{left + plot_w}" y2="{yy:.2f}" stroke="#ddd"/>')
                parts.append(f'<text x="{left - 7}" y="{yy + 4:.2f}" text-anchor="end">{_fmt(t)}</text>')
        for t in nice_ticks(xmin, xmax, 7):
            if xmin <= t <= xmax:
                xx = X(t)
                parts.append(f'<line x1="{xx:.2f}" y1="{y0 + panel_height}" x2="{xx:.2f}" '
                             f'y2="{y0 + panel_height + 4}" stroke="#333"/>')
                parts.append(f'<text x="{xx:.2f}" y="{y0 + panel_height + 16}" text-anchor="middle">{_fmt(t)}</text>')
        parts.append(f'<text x="18" y="{y0 + panel_height / 2}" text-anchor="middle" '
                     f'transform="rotate(-90 18 {y0 + panel_height / 2})">{escape(p.ylabel)}</text>')
        for yv, label in p.hlines:
            yy = Y(yv)
            parts.append(f'<line x1="{left}" y1="{yy:.2f}" x2="{left + plot_w}" y2="{yy:.2f}" '
                         'stroke="#555" stroke-dasharray="2,3"/>')
            parts.append(f'<text x="{left + plot_w - 4}" y="{yy - 4:.2f}" text-anchor="end" fill="#555">'
                         f'{escape(label)}</text>')
        legend_y = y0 + 12
        for s in p.series:
            c = colour.setdefault(s.label, PALETTE[len(colour) % len(PALETTE)])
            x = np.asarray(s.x, dtype=float)
            y = np.asarray(s.y, dtype=float)
            pts = []
            for i in range(x.size):
                if not np.isfinite(y[i]):
                    continue
                if s.step and pts:
                    pts.append(f"{X(x[i]):.2f},{Y(y[i - 1]):.2f}")
                pts.append(f"{X(x[i]):.2f},{Y(y[i]):.2f}")
            dash = ' stroke-dasharray="6,3"' if s.dashed else ""
            parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="1.6"{dash} points="{" ".join(pts)}"/>')
            lx = left + plot_w + 12
            parts.append(f'<line x1="{lx}" y1="{legend_y}" x2="{lx + 22}" y2="{legend_y}" stroke="{c}" '
                         f'stroke-width="2"{dash}/>')
            parts.append(f'<text x="{lx + 28}" y="{legend_y + 4}">{escape(s.label)}</text>')
            legend_y += 16
        parts.append("</g>")
    parts.append(f'<text x="{left + plot_w / 2}" y="{H - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    for i, note in enumerate(annotations):
        parts.append(f'<text class="annotation" x="{left + plot_w + 12}" y="{H - bottom - 16 * (len(annotations) - 1 - i)}">'
                     f'{escape(note)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
