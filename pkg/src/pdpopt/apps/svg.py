"""Minimal SVG line charts (no plotting dependency)."""

import math
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b")


def _nice_ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [start + i * step for i in range(int((hi - start) / step + 1e-9) + 1)]


def line_chart(series, title="", xlabel="iteration", ylabel="", log_y=False, width=640, height=400):
    """
    Render ``{label: (xs, ys)}`` as an SVG document string.

    With ``log_y`` non-positive values are dropped and the axis shows
    powers of ten.
    """
    left, right, top, bottom = 70, 150, 40, 50
    pw, ph = width - left - right, height - top - bottom
    cleaned = {}
    for label, (xs, ys) in series.items():
        xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
        ok = np.isfinite(xs) & np.isfinite(ys)
        if log_y:
            ok &= ys > 0
        if np.any(ok):
            cleaned[label] = (xs[ok], np.log10(ys[ok]) if log_y else ys[ok])
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>']
    if not cleaned:
        parts.append(f'<text x="{width / 2:.1f}" y="{height / 2:.1f}" text-anchor="middle">no data</text></svg>')
        return "\n".join(parts)
    x_lo = min(v[0].min() for v in cleaned.values())
    x_hi = max(v[0].max() for v in cleaned.values())
    y_lo = min(v[1].min() for v in cleaned.values())
    y_hi = max(v[1].max() for v in cleaned.values())
    if log_y:
        y_lo, y_hi = math.floor(y_lo), math.ceil(y_hi)
    if y_hi <= y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    if x_hi <= x_lo:
        x_hi = x_lo + 1

    def sx(x):
        return left + (x - x_lo) / (x_hi - x_lo) * pw

    def sy(y):
        return top + ph - (y - y_lo) / (y_hi - y_lo) * ph

    parts.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>')
    yticks = list(range(int(y_lo), int(y_hi) + 1)) if log_y else _nice_ticks(y_lo, y_hi)
    for t in yticks:
        if y_lo - 1e-12 <= t <= y_hi + 1e-12:
            label = f"1e{int(t)}" if log_y else f"{t:g}"
            parts.append(f'<line x1="{left}" x2="{left + pw}" y1="{sy(t):.1f}" y2="{sy(t):.1f}" stroke="#ddd"/>')
            parts.append(f'<text x="{left - 6}" y="{sy(t) + 4:.1f}" text-anchor="end">{label}</text>')
    for t in _nice_ticks(x_lo, x_hi):
        if x_lo <= t <= x_hi:
            parts.append(f'<text x="{sx(t):.1f}" y="{top + ph + 16}" text-anchor="middle">{t:g}</text>')
    parts.append(f'<text x="{left + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 16 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    for i, (label, (xs, ys)) in enumerate(cleaned.items()):
        color = PALETTE[i % len(PALETTE)]
        # thin long traces to at most ~1000 vertices
        stride = max(1, xs.size // 1000)
        pts = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs[::stride], ys[::stride]))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = top + 14 + 18 * i
        parts.append(f'<line x1="{left + pw + 10}" x2="{left + pw + 30}" y1="{ly}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 36}" y="{ly + 4}">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts)
