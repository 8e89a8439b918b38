"""Minimal deterministic SVG plots for reports (no plotting dependency).

Two chart types: survival step curves per cluster and 2-D embedding
scatters colored by cluster. Output is plain well-formed XML with a fixed
palette, so report files are byte-stable across runs.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN_LEFT, MARGIN_RIGHT, MARGIN_TOP, MARGIN_BOTTOM = 60, 150, 40, 50

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
)


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _axes(x_label: str, y_label: str, title: str, x_ticks, y_ticks) -> list[str]:
    x0, x1 = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    y0, y1 = HEIGHT - MARGIN_BOTTOM, MARGIN_TOP
    parts = [
        f'<text x="{(x0 + x1) / 2:.1f}" y="20" text-anchor="middle" '
        f'font-size="14" font-family="sans-serif">{escape(title)}</text>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle" '
        f'font-size="12" font-family="sans-serif">{escape(x_label)}</text>',
        f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" font-size="12" '
        f'font-family="sans-serif" transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">'
        f'{escape(y_label)}</text>',
    ]
    for value, px in x_ticks:
        parts.append(f'<line x1="{px:.1f}" y1="{y0}" x2="{px:.1f}" y2="{y0 + 5}" stroke="black"/>')
        parts.append(
            f'<text x="{px:.1f}" y="{y0 + 18}" text-anchor="middle" font-size="10" '
            f'font-family="sans-serif">{escape(value)}</text>'
        )
    for value, py in y_ticks:
        parts.append(f'<line x1="{x0 - 5}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="black"/>')
        parts.append(
            f'<text x="{x0 - 8}" y="{py + 3:.1f}" text-anchor="end" font-size="10" '
            f'font-family="sans-serif">{escape(value)}</text>'
        )
    return parts


def _legend(entries) -> list[str]:
    parts = []
    x = WIDTH - MARGIN_RIGHT + 15
    for row, (label, color) in enumerate(entries):
        y = MARGIN_TOP + 14 + row * 18
        parts.append(f'<rect x="{x}" y="{y - 9}" width="12" height="12" fill="{color}"/>')
        parts.append(
            f'<text x="{x + 18}" y="{y + 1}" font-size="11" font-family="sans-serif">'
            f'{escape(label)}</text>'
        )
    return parts


def _document(body: list[str]) -> str:
    return (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">\n'
        '<rect width="100%" height="100%" fill="white"/>\n'
        + "\n".join(body)
        + "\n</svg>\n"
    )


def survival_svg(curves: dict[int, "SurvivalCurve"], title: str) -> str:
    """Step-function survival curves, one line per cluster."""
    x0, x1 = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    y0, y1 = HEIGHT - MARGIN_BOTTOM, MARGIN_TOP
    t_max = max((max(curve.times) for curve in curves.values()), default=1.0)
    t_max = max(t_max, 1.0)

    def px(t):
        return x0 + (t / t_max) * (x1 - x0)

    def py(s):
        return y0 - s * (y0 - y1)

    x_ticks = [(_fmt(f * t_max), px(f * t_max)) for f in (0.0, 0.25, 0.5, 0.75, 1.0)]
    y_ticks = [(_fmt(s), py(s)) for s in (0.0, 0.25, 0.5, 0.75, 1.0)]
    body = _axes("days since first visit", "survival probability", title, x_ticks, y_ticks)

    legend = []
    for cluster in sorted(curves):
        curve = curves[cluster]
        color = PALETTE[cluster % len(PALETTE)]
        points = []
        prev_s = curve.survival[0]
        for t, s in zip(curve.times, curve.survival):
            points.append(f"{px(t):.2f},{py(prev_s):.2f}")
            points.append(f"{px(t):.2f},{py(s):.2f}")
            prev_s = s
        points.append(f"{px(t_max):.2f},{py(prev_s):.2f}")
        body.append(
            f'<polyline points="{" ".join(points)}" fill="none" stroke="{color}" '
            f'stroke-width="1.8"/>'
        )
        legend.append((f"cluster {cluster} (n={curve.at_risk[0]})", color))
    body.extend(_legend(legend))
    return _document(body)


def scatter_svg(points, labels, title: str) -> str:
    """Embedding scatter colored by cluster label."""
    P = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    x0, x1 = MARGIN_LEFT, WIDTH - MARGIN_RIGHT
    y0, y1 = HEIGHT - MARGIN_BOTTOM, MARGIN_TOP
    lo = P.min(axis=0)
    hi = P.max(axis=0)
    span = np.where(hi - lo == 0.0, 1.0, hi - lo)

    def px(u):
        return x0 + (u - lo[0]) / span[0] * (x1 - x0)

    def py(v):
        return y0 - (v - lo[1]) / span[1] * (y0 - y1)

    x_ticks = [(_fmt(lo[0]), px(lo[0])), (_fmt(hi[0]), px(hi[0]))]
    y_ticks = [(_fmt(lo[1]), py(lo[1])), (_fmt(hi[1]), py(hi[1]))]
    body = _axes("u1", "u2", title, x_ticks, y_ticks)
    for (u, v), label in zip(P, labels):
        color = PALETTE[int(label) % len(PALETTE)]
        body.append(f'<circle cx="{px(u):.2f}" cy="{py(v):.2f}" r="3" fill="{color}" '
                    f'fill-opacity="0.75"/>')
    body.extend(
        _legend([(f"cluster {c}", PALETTE[c % len(PALETTE)]) for c in sorted(set(labels.tolist()))])
    )
    return _document(body)
