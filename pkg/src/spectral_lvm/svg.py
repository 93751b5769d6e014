"""Static SVG line charts, one panel per series."""

from xml.sax.saxutils import escape

import numpy as np

WIDTH = 640
PANEL_HEIGHT = 140
MARGIN = 40


def _fmt(v):
    return f"{v:.2f}"


def line_panels(x, series, titles, x_label="bin"):
    """Render stacked line charts and return the SVG document as a string.

    Each series is normalised to its own panel height; the title carries
    the peak location.
    """
    x = np.asarray(x, dtype=np.float64)
    n = len(series)
    height = n * (PANEL_HEIGHT + MARGIN) + MARGIN
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
        f'viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{height}" fill="white"/>',
    ]
    x0, x1 = float(x.min()), float(x.max())
    span = x1 - x0 if x1 > x0 else 1.0
    plot_w = WIDTH - 2 * MARGIN
    for i, (y, title) in enumerate(zip(series, titles)):
        y = np.asarray(y, dtype=np.float64)
        top = MARGIN + i * (PANEL_HEIGHT + MARGIN)
        peak = float(y.max()) if y.size else 0.0
        scale = peak if peak > 0 else 1.0
        px = MARGIN + (x - x0) / span * plot_w
        py = top + PANEL_HEIGHT - (y / scale) * PANEL_HEIGHT
        points = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
        parts.append(
            f'<rect x="{MARGIN}" y="{top}" width="{plot_w}" height="{PANEL_HEIGHT}" '
            f'fill="none" stroke="#999"/>'
        )
        parts.append(f'<polyline fill="none" stroke="#1f77b4" stroke-width="1" points="{points}"/>')
        parts.append(f'<text x="{MARGIN}" y="{top - 6}">{escape(title)}</text>')
    bottom = height - 10
    parts.append(f'<text x="{MARGIN}" y="{bottom}">{escape(x_label)}: {x0:g} .. {x1:g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
