"""Deterministic SVG line charts for experiment summaries.

Hand-rolled on purpose: the output must be byte-identical across runs and
machines, so no plotting library (with its embedded ids, dates and font
probing) is involved.  Fixed fonts, fixed sizes, fixed palette; log-scale y
axis by default; error bars are plain vertical segments of +/- one value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

PALETTE = ("#1f619e", "#c44e52", "#55a868", "#8172b2",
           "#ccb974", "#64b5cd", "#8c613c", "#dc7ec0")

WIDTH = 860
HEIGHT = 520
MARGIN_LEFT = 78
MARGIN_RIGHT = 200
MARGIN_TOP = 46
MARGIN_BOTTOM = 58
FONT = "font-family=\"DejaVu Sans, sans-serif\""


@dataclass(frozen=True)
class Series:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    err: Sequence[float] | None = None


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _log_ticks(lo: float, hi: float) -> list[float]:
    k0 = math.floor(math.log10(lo))
    k1 = math.ceil(math.log10(hi))
    return [10.0**k for k in range(k0, k1 + 1)]


def _lin_ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10.0 ** math.floor(math.log10(raw))
    step = min((m for m in (1.0, 2.0, 5.0, 10.0) if m * mag >= raw),
               default=10.0) * mag
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-12 * step:
        ticks.append(t)
        t += step
    return ticks


def _tick_label(v: float, log: bool) -> str:
    if log:
        k = round(math.log10(v))
        return f"1e{k:d}" if k != 0 else "1"
    return f"{v:g}"


def emit_chart(series: Sequence[Series], path, *, title: str = "",
               xlabel: str = "iteration", ylabel: str = "error",
               log_y: bool = True, skip_initial: float = 0.0) -> str:
    """Render the series to an SVG file and return the SVG text.

    skip_initial drops points with x below the given value (useful for
    trimming the transient so the y axis is readable).  Raises on empty data.
    """
    trimmed = []
    for s in series:
        pts = [(float(x), float(y), float(s.err[i]) if s.err is not None else 0.0)
               for i, (x, y) in enumerate(zip(s.x, s.y))
               if x >= skip_initial and math.isfinite(y)]
        if pts:
            trimmed.append((s.label, pts))
    if not trimmed:
        raise ValueError("no data to chart")

    xs = [p[0] for _, pts in trimmed for p in pts]
    ys = [p[1] for _, pts in trimmed for p in pts]
    x_lo, x_hi = min(xs), max(xs)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if log_y:
        floor = 1e-16
        pos = [y for y in ys if y > 0]
        y_lo = min(pos) if pos else floor
        y_hi = max(max(ys), y_lo * 10)
        y_lo = max(y_lo, floor)

        def y_coord(v):
            v = max(v, y_lo)
            frac = (math.log10(v) - math.log10(y_lo)) / (math.log10(y_hi) - math.log10(y_lo))
            return MARGIN_TOP + (1.0 - frac) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)

        ticks = [t for t in _log_ticks(y_lo, y_hi) if y_lo <= t <= y_hi * 1.0001]
    else:
        y_lo, y_hi = min(ys), max(ys)
        if y_hi == y_lo:
            y_hi = y_lo + 1.0

        def y_coord(v):
            frac = (v - y_lo) / (y_hi - y_lo)
            return MARGIN_TOP + (1.0 - frac) * (HEIGHT - MARGIN_TOP - MARGIN_BOTTOM)

        ticks = _lin_ticks(y_lo, y_hi)

    def x_coord(v):
        frac = (v - x_lo) / (x_hi - x_lo)
        return MARGIN_LEFT + frac * (WIDTH - MARGIN_LEFT - MARGIN_RIGHT)

    plot_right = WIDTH - MARGIN_RIGHT
    plot_bottom = HEIGHT - MARGIN_BOTTOM
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{_fmt(WIDTH / 2)}" y="24" text-anchor="middle" {FONT} '
        f'font-size="15">{_escape(title)}</text>',
    ]

    # gridlines and y ticks
    for t in ticks:
        yc = y_coord(t)
        out.append(f'<line x1="{MARGIN_LEFT}" y1="{_fmt(yc)}" x2="{plot_right}" '
                   f'y2="{_fmt(yc)}" stroke="#dddddd" stroke-width="1"/>')
        out.append(f'<text x="{MARGIN_LEFT - 8}" y="{_fmt(yc + 4)}" text-anchor="end" '
                   f'{FONT} font-size="11">{_tick_label(t, log_y)}</text>')
    for t in _lin_ticks(x_lo, x_hi):
        xc = x_coord(t)
        out.append(f'<line x1="{_fmt(xc)}" y1="{plot_bottom}" x2="{_fmt(xc)}" '
                   f'y2="{plot_bottom + 5}" stroke="#333333" stroke-width="1"/>')
        out.append(f'<text x="{_fmt(xc)}" y="{plot_bottom + 20}" text-anchor="middle" '
                   f'{FONT} font-size="11">{t:g}</text>')

    # axes
    out.append(f'<line x1="{MARGIN_LEFT}" y1="{MARGIN_TOP}" x2="{MARGIN_LEFT}" '
               f'y2="{plot_bottom}" stroke="#333333" stroke-width="1.5"/>')
    out.append(f'<line x1="{MARGIN_LEFT}" y1="{plot_bottom}" x2="{plot_right}" '
               f'y2="{plot_bottom}" stroke="#333333" stroke-width="1.5"/>')
    out.append(f'<text x="{_fmt((MARGIN_LEFT + plot_right) / 2)}" y="{HEIGHT - 14}" '
               f'text-anchor="middle" {FONT} font-size="13">{_escape(xlabel)}</text>')
    out.append(f'<text x="20" y="{_fmt((MARGIN_TOP + plot_bottom) / 2)}" '
               f'text-anchor="middle" {FONT} font-size="13" '
               f'transform="rotate(-90 20 {_fmt((MARGIN_TOP + plot_bottom) / 2)})">'
               f'{_escape(ylabel)}</text>')

    # series
    for si, (label, pts) in enumerate(trimmed):
        color = PALETTE[si % len(PALETTE)]
        coords = [(x_coord(x), y_coord(y)) for x, y, _ in pts]
        if len(coords) > 1:
            joined = " ".join(f"{_fmt(xc)},{_fmt(yc)}" for xc, yc in coords)
            out.append(f'<polyline points="{joined}" fill="none" stroke="{color}" '
                       f'stroke-width="1.6"/>')
        for (xc, yc), (_, y, err) in zip(coords, pts):
            top = y_coord(y + err)
            bot = y_coord(max(y - err, 0.0))
            out.append(f'<line class="errbar" x1="{_fmt(xc)}" y1="{_fmt(top)}" '
                       f'x2="{_fmt(xc)}" y2="{_fmt(bot)}" stroke="{color}" '
                       f'stroke-width="1"/>')
            out.append(f'<circle class="marker" cx="{_fmt(xc)}" cy="{_fmt(yc)}" '
                       f'r="3" fill="{color}"/>')
        ly = MARGIN_TOP + 16 * si + 10
        out.append(f'<line x1="{plot_right + 12}" y1="{_fmt(ly - 4)}" '
                   f'x2="{plot_right + 34}" y2="{_fmt(ly - 4)}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{plot_right + 40}" y="{_fmt(ly)}" {FONT} '
                   f'font-size="11">{_escape(label)}</text>')

    out.append("</svg>")
    text = "\n".join(out) + "\n"
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return text


def _escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;"))
