"""Minimal deterministic SVG figures: correlation heatmaps and scatter plots."""

from __future__ import annotations

import math
from html import escape

import numpy as np


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _diverging(v: float) -> str:
    if not math.isfinite(v):
        return "#dddddd"
    v = max(-1.0, min(1.0, v))
    # white at 0, red for positive, blue for negative
    if v >= 0:
        r, g, b = 255, round(255 * (1 - v)), round(255 * (1 - v))
    else:
        r, g, b = round(255 * (1 + v)), round(255 * (1 + v)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def _svg(width: float, height: float, body: list[str], note: str | None) -> str:
    head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}" '
            f'viewBox="0 0 {_fmt(width)} {_fmt(height)}" font-family="sans-serif">']
    if note:
        head.append(f"<!-- {escape(note)} -->")
    head.append(f'<rect width="{_fmt(width)}" height="{_fmt(height)}" fill="white"/>')
    return "\n".join(head + body + ["</svg>"]) + "\n"


def heatmap_svg(matrix, row_labels, col_labels, title: str = "", note: str | None = None,
                cell: float = 46.0) -> str:
    """Grid of coloured cells, each annotated with its value (blank grey for NaN)."""
    m = np.asarray(matrix, dtype=float)
    if m.shape != (len(row_labels), len(col_labels)):
        raise ValueError("matrix shape does not match labels")
    left = 12 + 7 * max((len(r) for r in row_labels), default=0)
    top = 40 + 6 * max((len(c) for c in col_labels), default=0)
    width = left + cell * len(col_labels) + 20
    height = top + cell * len(row_labels) + 20
    body = [f'<text x="{_fmt(width / 2)}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>']
    for j, c in enumerate(col_labels):
        x = left + cell * (j + 0.5)
        body.append(f'<text x="{_fmt(x)}" y="{_fmt(top - 6)}" font-size="11" '
                    f'transform="rotate(-45 {_fmt(x)} {_fmt(top - 6)})">{escape(c)}</text>')
    for i, r in enumerate(row_labels):
        y = top + cell * i
        body.append(f'<text x="{_fmt(left - 6)}" y="{_fmt(y + cell / 2 + 4)}" text-anchor="end" '
                    f'font-size="11">{escape(r)}</text>')
        for j in range(len(col_labels)):
            x = left + cell * j
            v = m[i, j]
            body.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(cell)}" height="{_fmt(cell)}" '
                        f'fill="{_diverging(v)}" stroke="#888888" stroke-width="0.5"/>')
            label = _fmt(v) if math.isfinite(v) else "n/a"
            body.append(f'<text x="{_fmt(x + cell / 2)}" y="{_fmt(y + cell / 2 + 4)}" '
                        f'text-anchor="middle" font-size="10">{label}</text>')
    return _svg(width, height, body, note)


def scatter_svg(x, y, title: str = "", xlabel: str = "", ylabel: str = "", identity: bool = False,
                curve: tuple | None = None, note: str | None = None,
                width: float = 420.0, height: float = 380.0) -> str:
    """Scatter plot with optional identity line and an optional overlay curve (xs, ys)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pad_l, pad_r, pad_t, pad_b = 60.0, 20.0, 36.0, 50.0
    xs_all, ys_all = [x], [y]
    if curve is not None:
        xs_all.append(np.asarray(curve[0], dtype=float))
        ys_all.append(np.asarray(curve[1], dtype=float))
    lo_x, hi_x = min(a.min() for a in xs_all), max(a.max() for a in xs_all)
    lo_y, hi_y = min(a.min() for a in ys_all), max(a.max() for a in ys_all)
    if identity:
        lo_x = lo_y = min(lo_x, lo_y)
        hi_x = hi_y = max(hi_x, hi_y)
    if hi_x == lo_x:
        lo_x, hi_x = lo_x - 1, hi_x + 1
    if hi_y == lo_y:
        lo_y, hi_y = lo_y - 1, hi_y + 1
    pw, ph = width - pad_l - pad_r, height - pad_t - pad_b

    def sx(v):
        return pad_l + (v - lo_x) / (hi_x - lo_x) * pw

    def sy(v):
        return pad_t + ph - (v - lo_y) / (hi_y - lo_y) * ph

    body = [f'<text x="{_fmt(width / 2)}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<rect x="{_fmt(pad_l)}" y="{_fmt(pad_t)}" width="{_fmt(pw)}" height="{_fmt(ph)}" '
            f'fill="none" stroke="black"/>']
    for k in range(5):
        fx = lo_x + (hi_x - lo_x) * k / 4
        fy = lo_y + (hi_y - lo_y) * k / 4
        body.append(f'<line x1="{_fmt(sx(fx))}" y1="{_fmt(pad_t)}" x2="{_fmt(sx(fx))}" '
                    f'y2="{_fmt(pad_t + ph)}" stroke="#eeeeee"/>')
        body.append(f'<line x1="{_fmt(pad_l)}" y1="{_fmt(sy(fy))}" x2="{_fmt(pad_l + pw)}" '
                    f'y2="{_fmt(sy(fy))}" stroke="#eeeeee"/>')
        body.append(f'<text x="{_fmt(sx(fx))}" y="{_fmt(pad_t + ph + 16)}" text-anchor="middle" '
                    f'font-size="10">{fx:.3g}</text>')
        body.append(f'<text x="{_fmt(pad_l - 6)}" y="{_fmt(sy(fy) + 4)}" text-anchor="end" '
                    f'font-size="10">{fy:.3g}</text>')
    body.append(f'<text x="{_fmt(pad_l + pw / 2)}" y="{_fmt(height - 10)}" text-anchor="middle" '
                f'font-size="12">{escape(xlabel)}</text>')
    body.append(f'<text x="14" y="{_fmt(pad_t + ph / 2)}" text-anchor="middle" font-size="12" '
                f'transform="rotate(-90 14 {_fmt(pad_t + ph / 2)})">{escape(ylabel)}</text>')
    if identity:
        body.append(f'<line x1="{_fmt(sx(lo_x))}" y1="{_fmt(sy(lo_x))}" x2="{_fmt(sx(hi_x))}" '
                    f'y2="{_fmt(sy(hi_x))}" stroke="#999999" stroke-dasharray="4 3"/>')
    for a, b in zip(x, y):
        body.append(f'<circle cx="{_fmt(sx(a))}" cy="{_fmt(sy(b))}" r="3" fill="#1f77b4" '
                    f'fill-opacity="0.7"/>')
    if curve is not None:
        cx, cy = (np.asarray(c, dtype=float) for c in curve)
        order = np.argsort(cx, kind="stable")
        pts = " ".join(f"{_fmt(sx(cx[i]))},{_fmt(sy(cy[i]))}" for i in order)
        body.append(f'<polyline points="{pts}" fill="none" stroke="#d62728" stroke-width="2"/>')
    return _svg(width, height, body, note)
