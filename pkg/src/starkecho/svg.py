"""Minimal deterministic SVG line charts (no plotting dependency)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 720, 400
MARGIN = dict(left=70, right=130, top=30, bottom=50)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
SHADE = {"probe": "#f2d0a4", "control": "#b8d8f0"}


def _f(x: float) -> str:
    # abs < 0.005 would print as -0 or 0.00
    return format(x, ".2f").rstrip("0").rstrip(".") if abs(x) >= 0.005 else "0"


def nice_ticks(lo: float, hi: float, n: int = 6) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 12))
        t += step
    return ticks


def _label(v: float) -> str:
    s = format(v, ".6g")
    return "0" if s in ("-0", "0") else s


def line_chart(x, series: dict, xlabel="", ylabel="", title="", shading=()) -> str:
    """SVG text for ``series`` (label -> y array) against ``x``.

    ``shading`` is an iterable of (start, stop, channel, name) spans drawn
    behind the curves.
    """
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    x0, x1 = float(x.min()), float(x.max())
    allv = np.concatenate([v for v in ys.values()]) if ys else np.zeros(1)
    y0, y1 = float(np.min(allv)), float(np.max(allv))
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 1.0, y1 + 1.0
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    if x1 - x0 < 1e-12:
        x1 = x0 + 1.0

    L, R, T, B = MARGIN["left"], WIDTH - MARGIN["right"], MARGIN["top"], HEIGHT - MARGIN["bottom"]

    def px(v):
        return L + (v - x0) / (x1 - x0) * (R - L)

    def py(v):
        return B - (v - y0) / (y1 - y0) * (B - T)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{(L + R) // 2}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>')

    for start, stop, channel, name in shading:
        a, b = max(start, x0), min(stop, x1)
        if b <= a:
            continue
        w = max(px(b) - px(a), 1.0)
        out.append(
            f'<rect x="{_f(px(a))}" y="{T}" width="{_f(w)}" height="{B - T}" '
            f'fill="{SHADE.get(channel, "#dddddd")}" opacity="0.6"><title>{escape(name)}</title></rect>'
        )

    # axes and grid
    out.append('<g stroke="#eeeeee">')
    for t in nice_ticks(y0, y1):
        out.append(f'<line x1="{L}" y1="{_f(py(t))}" x2="{R}" y2="{_f(py(t))}"/>')
    out.append("</g>")
    out.append(f'<rect x="{L}" y="{T}" width="{R - L}" height="{B - T}" fill="none" stroke="black"/>')
    for t in nice_ticks(x0, x1):
        X = _f(px(t))
        out.append(f'<line x1="{X}" y1="{B}" x2="{X}" y2="{B + 5}" stroke="black"/>')
        out.append(f'<text x="{X}" y="{B + 18}" text-anchor="middle">{_label(t)}</text>')
    for t in nice_ticks(y0, y1):
        Y = _f(py(t))
        out.append(f'<line x1="{L - 5}" y1="{Y}" x2="{L}" y2="{Y}" stroke="black"/>')
        out.append(f'<text x="{L - 8}" y="{Y}" text-anchor="end" dominant-baseline="middle">{_label(t)}</text>')
    if xlabel:
        out.append(f'<text x="{(L + R) // 2}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(
            f'<text x="16" y="{(T + B) // 2}" text-anchor="middle" '
            f'transform="rotate(-90 16 {(T + B) // 2})">{escape(ylabel)}</text>'
        )

    for i, (name, y) in enumerate(ys.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_f(px(a))},{_f(py(b))}" for a, b in zip(x, y))
        out.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}">'
            f'<title>{escape(name)}</title></polyline>'
        )

    # legend
    lx, ly = R + 15, T + 10
    out.append('<g class="legend">')
    for i, name in enumerate(ys):
        color = PALETTE[i % len(PALETTE)]
        yy = ly + 20 * i
        out.append(f'<line x1="{lx}" y1="{yy}" x2="{lx + 24}" y2="{yy}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 30}" y="{yy}" dominant-baseline="middle">{escape(name)}</text>')
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
