"""Tiny SVG line/marker plotter for verification figures (no plotting dependency)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence
from xml.sax.saxutils import escape

PALETTE = ("#d62728", "#1f77b4", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf")
WIDTH, HEIGHT = 640, 440
MARGIN = (70, 20, 30, 55)  # left, right, top, bottom


@dataclass
class Series:
    x: Sequence[float]
    y: Sequence[float]
    label: str = ""
    markers: bool = False
    dashed: bool = False
    yerr: Sequence[float] | None = None
    color: str | None = None
    extra: dict = field(default_factory=dict)


def _fmt(v: float) -> str:
    return f"{v:.6g}"


class _Axis:
    def __init__(self, lo, hi, log, pix_lo, pix_hi):
        if log:
            lo, hi = math.log10(lo), math.log10(hi)
        if hi == lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi, self.log = lo, hi, log
        self.p0, self.p1 = pix_lo, pix_hi

    def __call__(self, v):
        if self.log:
            v = math.log10(v)
        return self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)

    def ticks(self):
        if self.log:
            return [10.0 ** k for k in range(math.ceil(self.lo), math.floor(self.hi) + 1)]
        step = 10 ** math.floor(math.log10((self.hi - self.lo) / 2))
        while (self.hi - self.lo) / step > 8:
            step *= 2
        first = math.ceil(self.lo / step) * step
        out, v = [], first
        while v <= self.hi + 1e-12 * step:
            out.append(round(v, 12))
            v += step
        return out


def _usable(series, logx, logy):
    pts = []
    for x, y in zip(series.x, series.y):
        if x is None or y is None or not (math.isfinite(x) and math.isfinite(y)):
            continue
        if (logx and x <= 0) or (logy and y <= 0):
            continue
        pts.append((float(x), float(y)))
    return pts


def render(series: Sequence[Series], title="", xlabel="", ylabel="", logx=False, logy=False) -> str:
    data = [(s, _usable(s, logx, logy)) for s in series]
    xs = [p[0] for _, pts in data for p in pts]
    ys = [p[1] for _, pts in data for p in pts]
    if not xs:
        xs, ys = [1.0, 2.0], [1.0, 2.0]
    left, right, top, bottom = MARGIN
    ax = _Axis(min(xs), max(xs), logx, left, WIDTH - right)
    ay = _Axis(min(ys), max(ys), logy, HEIGHT - bottom, top)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{WIDTH - left - right}" height="{HEIGHT - top - bottom}" '
           f'fill="none" stroke="black"/>']
    for t in ax.ticks():
        px = ax(t)
        out.append(f'<line x1="{_fmt(px)}" y1="{HEIGHT - bottom}" x2="{_fmt(px)}" y2="{HEIGHT - bottom + 5}" stroke="black"/>')
        out.append(f'<text x="{_fmt(px)}" y="{HEIGHT - bottom + 18}" text-anchor="middle">{_fmt(t)}</text>')
    for t in ay.ticks():
        py = ay(t)
        out.append(f'<line x1="{left - 5}" y1="{_fmt(py)}" x2="{left}" y2="{_fmt(py)}" stroke="black"/>')
        out.append(f'<text x="{left - 8}" y="{_fmt(py + 4)}" text-anchor="end">{_fmt(t)}</text>')
    out.append(f'<text x="{WIDTH / 2}" y="{HEIGHT - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" '
               f'transform="rotate(-90 16 {HEIGHT / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="18" text-anchor="middle">{escape(title)}</text>')
    for i, (s, pts) in enumerate(data):
        color = s.color or PALETTE[i % len(PALETTE)]
        if not pts:
            continue
        if s.markers:
            errs = list(s.yerr) if s.yerr is not None else None
            for j, (x, y) in enumerate(pts):
                px, py = ax(x), ay(y)
                out.append(f'<circle cx="{_fmt(px)}" cy="{_fmt(py)}" r="3" fill="{color}"/>')
                if errs is not None and j < len(errs) and errs[j] and not logy:
                    lo, hi = ay(y - errs[j]), ay(y + errs[j])
                    out.append(f'<line x1="{_fmt(px)}" y1="{_fmt(lo)}" x2="{_fmt(px)}" y2="{_fmt(hi)}" stroke="{color}"/>')
        else:
            path = " ".join(f"{_fmt(ax(x))},{_fmt(ay(y))}" for x, y in pts)
            dash = ' stroke-dasharray="6 4"' if s.dashed else ""
            out.append(f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>')
        if s.label:
            ly = top + 16 + 16 * i
            out.append(f'<rect x="{left + 10}" y="{ly - 9}" width="12" height="3" fill="{color}"/>')
            out.append(f'<text x="{left + 28}" y="{ly}">{escape(s.label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
