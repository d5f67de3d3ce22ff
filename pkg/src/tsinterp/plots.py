"""Deterministic SVG emitters: heatmaps and line charts."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


def _fmt(v):
    return f"{v:.2f}"


def _diverging(v, vmax):
    """Blue (negative) through white to red (positive)."""
    u = 0.0 if vmax == 0 else max(-1.0, min(1.0, v / vmax))
    if u >= 0:
        r, g, b = 255, round(255 * (1 - u)), round(255 * (1 - u))
    else:
        r, g, b = round(255 * (1 + u)), round(255 * (1 + u)), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def _sequential(v, vmax):
    """White to dark red."""
    u = 0.0 if vmax == 0 else max(0.0, min(1.0, v / vmax))
    r = round(255 - 115 * u)
    gb = round(255 * (1 - u))
    return f"#{r:02x}{gb:02x}{gb:02x}"


def heatmap_svg(matrix, row_labels, col_labels, title="", signed=True, cell=36) -> str:
    m = np.asarray(matrix, dtype=np.float64)
    rows, cols = m.shape
    left, top = 90, 40 + (18 if title else 0)
    width = left + cols * cell + 20
    height = top + rows * cell + 60
    vmax = float(np.abs(m).max()) if m.size else 0.0
    color = _diverging if signed else _sequential
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>')
    for j, lab in enumerate(col_labels):
        x = left + j * cell + cell / 2
        out.append(f'<text class="col-label" x="{_fmt(x)}" y="{top - 6}" text-anchor="middle">{escape(str(lab))}</text>')
    for i, lab in enumerate(row_labels):
        y = top + i * cell + cell / 2 + 4
        out.append(f'<text class="row-label" x="{left - 6}" y="{_fmt(y)}" text-anchor="end">{escape(str(lab))}</text>')
    for i in range(rows):
        for j in range(cols):
            v = m[i, j]
            out.append(
                f'<rect class="cell" x="{left + j * cell}" y="{top + i * cell}" width="{cell}" '
                f'height="{cell}" fill="{color(v, vmax)}" stroke="#999" stroke-width="0.5">'
                f"<title>{escape(str(row_labels[i]))}, {escape(str(col_labels[j]))}: {v:.6g}</title></rect>"
            )
    scale = f"{'-' if signed else '0 to '}{vmax:.4g}{' to +' + format(vmax, '.4g') if signed else ''}"
    out.append(f'<text x="{left}" y="{top + rows * cell + 20}">scale: {escape(scale)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart_svg(series, title="", xlabel="", ylabel="", width=640, height=320) -> str:
    """``series`` maps a name to (xs, ys); one polyline per entry."""
    left, right, top, bottom = 60, 20, 30, 40
    xs_all = np.concatenate([np.asarray(xs, float) for xs, _ in series.values()]) if series else np.zeros(1)
    ys_all = np.concatenate([np.asarray(ys, float) for _, ys in series.values()]) if series else np.zeros(1)
    ys_all = ys_all[np.isfinite(ys_all)] if ys_all.size else ys_all
    x0, x1 = float(xs_all.min()), float(xs_all.max())
    y0, y1 = (float(ys_all.min()), float(ys_all.max())) if ys_all.size else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1
    if y1 == y0:
        y1 = y0 + 1
    pw, ph = width - left - right, height - top - bottom

    def px(x):
        return left + (x - x0) / (x1 - x0) * pw

    def py(y):
        return top + (1 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
        f'<text x="{left + pw / 2}" y="{height - 8}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="12" y="{top + ph / 2}" transform="rotate(-90 12 {top + ph / 2})" text-anchor="middle">{escape(ylabel)}</text>',
        f'<text x="{left - 4}" y="{top + 4}" text-anchor="end">{y1:.4g}</text>',
        f'<text x="{left - 4}" y="{top + ph}" text-anchor="end">{y0:.4g}</text>',
        f'<text x="{left}" y="{top + ph + 14}" text-anchor="middle">{x0:.4g}</text>',
        f'<text x="{left + pw}" y="{top + ph + 14}" text-anchor="middle">{x1:.4g}</text>',
    ]
    for k, (name, (xs, ys)) in enumerate(series.items()):
        pts = " ".join(
            f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in zip(np.asarray(xs, float), np.asarray(ys, float)) if np.isfinite(y)
        )
        colour = PALETTE[k % len(PALETTE)]
        out.append(
            f'<polyline class="series" data-name="{escape(name)}" fill="none" stroke="{colour}" '
            f'stroke-width="1.5" points="{pts}"/>'
        )
        out.append(f'<text x="{left + pw - 120}" y="{top + 14 * (k + 1)}" fill="{colour}">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
