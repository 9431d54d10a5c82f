"""Static SVG plots written directly: elevation scatter and freeboard histogram.

No plotting dependency; output is deterministic text so products stay
byte-reproducible.
"""

from __future__ import annotations

import numpy as np

CLASS_COLORS = {
    0: "#9e9e9e",  # unlabeled
    1: "#2457c5",  # thick ice (blue)
    2: "#2f9e44",  # thin ice (green)
    3: "#f08c00",  # open water (orange)
}
CLASS_NAMES = {0: "unlabeled", 1: "thick ice", 2: "thin ice", 3: "open water"}

_WIDTH, _HEIGHT = 900, 420
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 70, 20, 40, 50
_MAX_SCATTER_POINTS = 20_000


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, count)


def _axes(parts: list[str], x_lo, x_hi, y_lo, y_hi, x_label, y_label, title) -> tuple:
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(v):
        return _MARGIN_L + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v):
        return _HEIGHT - _MARGIN_B - (v - y_lo) / (y_hi - y_lo) * plot_h

    parts.append(f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" '
                 f'height="{plot_h}" fill="none" stroke="#333"/>')
    parts.append(f'<text x="{_WIDTH / 2:.1f}" y="24" text-anchor="middle" '
                 f'font-size="16">{title}</text>')
    for tick in _ticks(x_lo, x_hi):
        x = sx(tick)
        parts.append(f'<line x1="{x:.2f}" y1="{_HEIGHT - _MARGIN_B}" x2="{x:.2f}" '
                     f'y2="{_HEIGHT - _MARGIN_B + 5}" stroke="#333"/>')
        parts.append(f'<text x="{x:.2f}" y="{_HEIGHT - _MARGIN_B + 20}" '
                     f'text-anchor="middle" font-size="11">{tick:.6g}</text>')
    for tick in _ticks(y_lo, y_hi):
        y = sy(tick)
        parts.append(f'<line x1="{_MARGIN_L - 5}" y1="{y:.2f}" x2="{_MARGIN_L}" '
                     f'y2="{y:.2f}" stroke="#333"/>')
        parts.append(f'<text x="{_MARGIN_L - 8}" y="{y + 4:.2f}" text-anchor="end" '
                     f'font-size="11">{tick:.6g}</text>')
    parts.append(f'<text x="{_WIDTH / 2:.1f}" y="{_HEIGHT - 12}" text-anchor="middle" '
                 f'font-size="13">{x_label}</text>')
    parts.append(f'<text x="18" y="{_HEIGHT / 2:.1f}" text-anchor="middle" '
                 f'font-size="13" transform="rotate(-90 18 {_HEIGHT / 2:.1f})">'
                 f'{y_label}</text>')
    return sx, sy


def _svg(parts: list[str]) -> str:
    body = "\n".join(parts)
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
            f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">\n'
            f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>\n'
            f"{body}\n</svg>\n")


def elevation_scatter_svg(along: np.ndarray, heights: np.ndarray,
                          classes: np.ndarray, title: str = "Surface elevation",
                          y_label: str = "elevation (m)") -> str:
    """Along-track elevation scatter colored by surface class."""
    along = np.asarray(along, dtype=np.float64)
    heights = np.asarray(heights, dtype=np.float64)
    classes = np.asarray(classes, dtype=np.int64)
    if along.size == 0:
        raise ValueError("nothing to plot")
    step = max(1, along.size // _MAX_SCATTER_POINTS)
    along, heights, classes = along[::step], heights[::step], classes[::step]
    pad = 0.05 * (heights.max() - heights.min() + 1e-9)
    parts: list[str] = []
    sx, sy = _axes(parts, along.min(), along.max(),
                   heights.min() - pad, heights.max() + pad,
                   "along-track distance (m)", y_label, title)
    for code in (1, 2, 3, 0):
        mask = classes == code
        if not np.any(mask):
            continue
        color = CLASS_COLORS[code]
        dots = "".join(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="1.2"/>'
                       for x, y in zip(along[mask], heights[mask]))
        parts.append(f'<g fill="{color}" fill-opacity="0.8">{dots}</g>')
    legend_x = _WIDTH - _MARGIN_R - 130
    for i, code in enumerate((1, 2, 3)):
        y = _MARGIN_T + 14 + 16 * i
        parts.append(f'<circle cx="{legend_x}" cy="{y}" r="4" fill="{CLASS_COLORS[code]}"/>')
        parts.append(f'<text x="{legend_x + 10}" y="{y + 4}" font-size="12">'
                     f'{CLASS_NAMES[code]}</text>')
    return _svg(parts)


def histogram_svg(edges: np.ndarray, counts: np.ndarray,
                  title: str = "Freeboard distribution",
                  x_label: str = "freeboard (m)") -> str:
    """Bar chart of a precomputed histogram."""
    edges = np.asarray(edges, dtype=np.float64)
    counts = np.asarray(counts, dtype=np.int64)
    if counts.size == 0:
        raise ValueError("nothing to plot")
    parts: list[str] = []
    sx, sy = _axes(parts, edges[0], edges[-1], 0.0, float(counts.max()) * 1.05,
                   x_label, "segment count", title)
    bars = []
    y0 = sy(0.0)
    for left, right, count in zip(edges[:-1], edges[1:], counts):
        if count == 0:
            continue
        x = sx(left)
        w = max(sx(right) - sx(left) - 0.5, 0.5)
        y = sy(float(count))
        bars.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" '
                    f'height="{y0 - y:.2f}"/>')
    parts.append(f'<g fill="#2457c5" fill-opacity="0.85">{"".join(bars)}</g>')
    return _svg(parts)
