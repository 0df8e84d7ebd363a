"""SVG rendering of trajectories and vector-field glyphs."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape, quoteattr

import numpy as np

PALETTE = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
]


def cluster_color(j: int) -> str:
    return PALETTE[j % len(PALETTE)]


def render_svg(grid, trajectories, colors, fields=(), field_colors=(), size=800, margin=20,
               title=None) -> str:
    """Trajectory polylines plus one arrow glyph group per grid vertex and field.

    Glyph length is proportional to field magnitude; the largest vector spans
    80% of a cell. Zero vectors are drawn as dots.
    """
    (xmin, ymin), (xmax, ymax) = grid.bbox_min, grid.bbox_max
    scale = (size - 2 * margin) / max(xmax - xmin, ymax - ymin)
    width = 2 * margin + scale * (xmax - xmin)
    height = 2 * margin + scale * (ymax - ymin)

    def px(x, y):
        return margin + (x - xmin) * scale, margin + (ymax - y) * scale

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1f}" height="{height:.1f}" '
        f'viewBox="0 0 {width:.1f} {height:.1f}">',
    ]
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(f'<rect x="0" y="0" width="{width:.1f}" height="{height:.1f}" fill="white"/>')
    out.append('<g class="trajectories" fill="none" stroke-width="0.8" stroke-opacity="0.6">')
    for tr, color in zip(trajectories, colors):
        pts = " ".join("{:.2f},{:.2f}".format(*px(x, y)) for x, y in tr.points)
        out.append(f'<polyline stroke={quoteattr(color)} points="{pts}"/>')
    out.append("</g>")

    cell = scale * min(grid.hx, grid.hy)
    for field, color in zip(fields, field_colors):
        mags = np.hypot(field.values[:, 0], field.values[:, 1])
        vmax = float(mags.max()) if len(mags) else 0.0
        out.append(f'<g class="field" stroke={quoteattr(color)} fill={quoteattr(color)}>')
        for (x, y), (vx, vy), m in zip(grid.vertices, field.values, mags):
            x0, y0 = px(x, y)
            if vmax == 0.0 or m <= 1e-12 * vmax:
                out.append(f'<g class="glyph"><circle cx="{x0:.2f}" cy="{y0:.2f}" r="1.5"/></g>')
                continue
            length = 0.8 * cell * m / vmax
            dx, dy = vx / m * length, -vy / m * length
            x1, y1 = x0 + dx, y0 + dy
            head = min(6.0, 0.35 * length)
            ang = math.atan2(dy, dx)
            hx1 = x1 - head * math.cos(ang - 0.4)
            hy1 = y1 - head * math.sin(ang - 0.4)
            hx2 = x1 - head * math.cos(ang + 0.4)
            hy2 = y1 - head * math.sin(ang + 0.4)
            out.append(
                f'<g class="glyph"><line x1="{x0:.2f}" y1="{y0:.2f}" x2="{x1:.2f}" y2="{y1:.2f}" '
                f'stroke-width="1.2"/><polygon points="{x1:.2f},{y1:.2f} {hx1:.2f},{hy1:.2f} '
                f'{hx2:.2f},{hy2:.2f}"/></g>'
            )
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"
