"""Learning-curve SVGs: per group of seeds, the median curve with a min/max band."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .harness import read_csv

WIDTH, HEIGHT = 640, 400
MARGIN = {"left": 70, "right": 20, "top": 20, "bottom": 50}
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def group_inputs(paths):
    """Map each directory (all its ``seed_*.csv``) or lone CSV file to one labelled group."""
    groups = {}
    for p in paths:
        p = Path(p)
        files = sorted(p.glob("seed_*.csv")) if p.is_dir() else [p]
        if not files:
            raise ValueError(f"{p}: no seed_*.csv files")
        groups[p.name if p.is_dir() else p.stem] = files
    return groups


def curve_stats(records):
    """Pointwise median, min and max across seeds, truncated to the shortest run."""
    n = min(len(r.rows) for r in records)
    steps = records[0].env_steps[:n]
    ys = np.array([r.rewards[:n] for r in records])
    return steps, np.median(ys, axis=0), ys.min(axis=0), ys.max(axis=0)


def _f(x):
    return f"{x:.2f}"


def render_svg(groups):
    """SVG text for ``{label: [RunRecord, ...]}``."""
    if not groups:
        raise ValueError("nothing to plot")
    stats = {label: curve_stats(recs) for label, recs in groups.items()}
    xs = np.concatenate([s[0] for s in stats.values()])
    ys = np.concatenate([np.concatenate([s[2], s[3]]) for s in stats.values()])
    ys = ys[np.isfinite(ys)]
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = (float(ys.min()), float(ys.max())) if len(ys) else (0.0, 1.0)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + (x - x0) / (x1 - x0) * pw

    def py(y):
        return MARGIN["top"] + (1.0 - (y - y0) / (y1 - y0)) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"] + ph}" x2="{MARGIN["left"] + pw}" '
        f'y2="{MARGIN["top"] + ph}" stroke="black"/>',
        f'<line x1="{MARGIN["left"]}" y1="{MARGIN["top"]}" x2="{MARGIN["left"]}" '
        f'y2="{MARGIN["top"] + ph}" stroke="black"/>',
    ]
    for i in range(5):
        xv = x0 + (x1 - x0) * i / 4
        yv = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{_f(px(xv))}" y="{MARGIN["top"] + ph + 18}" font-size="11" '
                   f'text-anchor="middle">{xv:.0f}</text>')
        out.append(f'<text x="{MARGIN["left"] - 6}" y="{_f(py(yv) + 4)}" font-size="11" '
                   f'text-anchor="end">{yv:.1f}</text>')
    out.append(f'<text x="{MARGIN["left"] + pw / 2:.2f}" y="{HEIGHT - 8}" font-size="13" '
               'text-anchor="middle">env steps</text>')
    out.append(f'<text x="16" y="{MARGIN["top"] + ph / 2:.2f}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {MARGIN["top"] + ph / 2:.2f})">mean episode reward</text>')
    for i, (label, (steps, med, lo, hi)) in enumerate(stats.items()):
        color = COLORS[i % len(COLORS)]
        if len(groups[label]) > 1:
            upper = [f"{_f(px(x))},{_f(py(y))}" for x, y in zip(steps, hi)]
            lower = [f"{_f(px(x))},{_f(py(y))}" for x, y in zip(steps[::-1], lo[::-1])]
            out.append(f'<polygon class="band" points="{" ".join(upper + lower)}" fill="{color}" '
                       'fill-opacity="0.2" stroke="none"/>')
        pts = " ".join(f"{_f(px(x))},{_f(py(y))}" for x, y in zip(steps, med))
        out.append(f'<polyline class="median" points="{pts}" fill="none" stroke="{color}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="{MARGIN["left"] + 10}" y="{MARGIN["top"] + 14 + 16 * i}" '
                   f'font-size="12" fill="{color}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_curves(paths, out_path):
    groups = {label: [read_csv(f) for f in files] for label, files in group_inputs(paths).items()}
    svg = render_svg(groups)
    with open(out_path, "w") as f:
        f.write(svg)
    return svg
