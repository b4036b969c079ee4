"""Accuracy-versus-noise line charts as standalone SVG.

Output is a pure function of the records: fixed number formatting, series
ordered by name, no timestamps.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

from .dataio import RunRecord, sort_records

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")
WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 64, "right": 150, "top": 40, "bottom": 56}
X_LABELS = {"invert": "inversion angle theta (rad)", "flip": "flip probability r",
            "awgn": "noise std"}


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def series(records) -> dict[str, list[tuple[float, float]]]:
    """Points grouped per curve. The curve name adds dataset and kind only when they vary."""
    records = sort_records(records)
    many_ds = len({r.dataset for r in records}) > 1
    many_kind = len({r.noise_kind for r in records}) > 1
    out = defaultdict(list)
    for r in records:
        name = r.model
        if many_ds:
            name += f" {r.dataset}"
        if many_kind:
            name += f" ({r.noise_kind})"
        out[name].append((r.noise_param, r.accuracy))
    return {k: sorted(out[k]) for k in sorted(out)}


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi == lo:
        return [lo]
    return [lo + (hi - lo) * k / (n - 1) for k in range(n)]


def render(records: list[RunRecord], title: str = "") -> str:
    if not records:
        raise ValueError("no records to plot")
    curves = series(records)
    xs = [x for pts in curves.values() for x, _ in pts]
    x_lo, x_hi = min(xs), max(xs)
    pad = 0.5 if x_hi == x_lo else 0.0
    x_lo, x_hi = x_lo - pad, x_hi + pad
    plot_w = WIDTH - MARGIN["left"] - MARGIN["right"]
    plot_h = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        return MARGIN["top"] + (1.0 - y) * plot_h

    kinds = sorted({r.noise_kind for r in records})
    x_label = X_LABELS.get(kinds[0], "noise parameter") if len(kinds) == 1 else "noise parameter"
    if not title:
        title = "Accuracy under " + ", ".join(kinds)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH / 2 - MARGIN["right"] / 2:.2f}" y="22" text-anchor="middle" '
           f'font-size="14">{escape(title)}</text>']
    x0, x1 = MARGIN["left"], MARGIN["left"] + plot_w
    y0, y1 = MARGIN["top"] + plot_h, MARGIN["top"]
    out.append(f'<g stroke="#444" stroke-width="1"><line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}"/>'
               f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}"/></g>')
    for t in _ticks(0.0, 1.0, 6):
        y = py(t)
        out.append(f'<line x1="{x0}" y1="{_fmt(y)}" x2="{x1}" y2="{_fmt(y)}" stroke="#ddd"/>'
                   f'<text x="{x0 - 6}" y="{_fmt(y + 4)}" text-anchor="end">{t:.1f}</text>')
    for t in _ticks(x_lo, x_hi):
        x = px(t)
        out.append(f'<line x1="{_fmt(x)}" y1="{y0}" x2="{_fmt(x)}" y2="{y0 + 5}" stroke="#444"/>'
                   f'<text x="{_fmt(x)}" y="{y0 + 18}" text-anchor="middle">{t:.3g}</text>')
    out.append(f'<text x="{(x0 + x1) / 2:.2f}" y="{HEIGHT - 14}" text-anchor="middle">{escape(x_label)}</text>')
    out.append(f'<text transform="translate(18 {(y0 + y1) / 2:.2f}) rotate(-90)" '
               f'text-anchor="middle">accuracy</text>')
    for i, (name, pts) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(px(x))},{_fmt(py(y))}" for x, y in pts)
        if len(pts) > 1:
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
        for x, y in pts:
            out.append(f'<circle cx="{_fmt(px(x))}" cy="{_fmt(py(y))}" r="3" fill="{color}"/>')
        ly = MARGIN["top"] + 16 + 20 * i
        lx = x1 + 16
        out.append(f'<g class="legend"><line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/><text x="{lx + 26}" y="{ly + 4}">{escape(name)}</text></g>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_svg(records, path, title: str = "") -> Path:
    path = Path(path)
    path.write_text(render(records, title))
    return path
