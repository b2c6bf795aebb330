"""Minimal SVG line plots written by hand (no plotting dependency)."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def line_plot_svg(
    x: Sequence[float],
    series: dict[str, Sequence[float]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
    ylim: tuple[float, float] | None = None,
    width: int = 640,
    height: int = 400,
) -> str:
    left, right, top, bottom = 60, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    x0, x1 = min(x), max(x)
    if ylim is None:
        ys = [v for s in series.values() for v in s]
        ylim = (min(ys), max(ys))
    y0, y1 = ylim
    xs = (x1 - x0) or 1.0
    ys_ = (y1 - y0) or 1.0

    def px(v: float) -> float:
        return left + (v - x0) / xs * pw

    def py(v: float) -> float:
        return top + (1.0 - (v - y0) / ys_) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for k in range(6):
        tx = x0 + xs * k / 5
        ty = y0 + ys_ * k / 5
        out.append(f'<text x="{px(tx):.1f}" y="{top + ph + 16}" text-anchor="middle">{tx:g}</text>')
        out.append(f'<text x="{left - 6}" y="{py(ty) + 4:.1f}" text-anchor="end">{ty:.2g}</text>')
        out.append(f'<line x1="{left}" x2="{left + pw}" y1="{py(ty):.1f}" y2="{py(ty):.1f}" stroke="#ddd"/>')
    for (name, ys), color in zip(series.items(), COLORS):
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(x, ys))
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}">'
                   f"<title>{escape(name)}</title></polyline>")
    for k, ((name, _), color) in enumerate(zip(series.items(), COLORS)):
        yy = top + 16 + 16 * k
        out.append(f'<line x1="{left + pw - 150}" x2="{left + pw - 125}" y1="{yy}" y2="{yy}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{left + pw - 120}" y="{yy + 4}">{escape(name)}</text>')
    if title:
        out.append(f'<text x="{width / 2}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>')
    if xlabel:
        out.append(f'<text x="{left + pw / 2}" y="{height - 12}" text-anchor="middle">{escape(xlabel)}</text>')
    if ylabel:
        out.append(f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
                   f'transform="rotate(-90 16 {top + ph / 2})">{escape(ylabel)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
