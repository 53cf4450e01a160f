"""Tiny deterministic SVG writer for scatter plots and polylines."""
from __future__ import annotations

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
SIZE = 480
MARGIN = 40


def _fmt(x):
    return f"{x:.2f}"


class Canvas:
    """Maps data coordinates into a square plot with fixed margins."""

    def __init__(self, xlim, ylim, xlabel="", ylabel="", title=""):
        x0, x1 = map(float, xlim)
        y0, y1 = map(float, ylim)
        if x1 <= x0:
            x0, x1 = x0 - 1.0, x0 + 1.0
        if y1 <= y0:
            y0, y1 = y0 - 1.0, y0 + 1.0
        self.xlim, self.ylim = (x0, x1), (y0, y1)
        self.items = []
        self.xlabel, self.ylabel, self.title = xlabel, ylabel, title

    def _px(self, x, y):
        w = SIZE - 2 * MARGIN
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        return (MARGIN + (np.asarray(x) - x0) / (x1 - x0) * w,
                SIZE - MARGIN - (np.asarray(y) - y0) / (y1 - y0) * w)

    def scatter(self, x, y, group=0, r=1.2):
        px, py = self._px(x, y)
        col = PALETTE[int(group) % len(PALETTE)]
        for a, b in zip(px, py):
            self.items.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="{r}" fill="{col}"/>')

    def polyline(self, x, y, group=0, width=1.5):
        px, py = self._px(x, y)
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(px, py))
        col = PALETTE[int(group) % len(PALETTE)]
        self.items.append(f'<polyline points="{pts}" fill="none" stroke="{col}" '
                          f'stroke-width="{width}"/>')

    def render(self) -> str:
        (x0, x1), (y0, y1) = self.xlim, self.ylim
        lo, hi = MARGIN, SIZE - MARGIN
        head = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" '
                f'viewBox="0 0 {SIZE} {SIZE}">',
                f'<rect x="{lo}" y="{lo}" width="{hi - lo}" height="{hi - lo}" '
                'fill="white" stroke="black"/>']
        labels = [
            f'<text x="{SIZE / 2}" y="{SIZE - 8}" text-anchor="middle" font-size="12">'
            f'{self.xlabel} [{x0:.3g}, {x1:.3g}]</text>',
            f'<text x="12" y="{SIZE / 2}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 12 {SIZE / 2})">{self.ylabel} [{y0:.3g}, {y1:.3g}]</text>',
            f'<text x="{SIZE / 2}" y="20" text-anchor="middle" font-size="13">{self.title}</text>',
        ]
        return "\n".join(head + self.items + labels + ["</svg>"]) + "\n"

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.render())


def limits(values, pad=0.05):
    v = np.asarray(values, dtype=float)
    v = v[np.isfinite(v)]
    if len(v) == 0:
        return (-1.0, 1.0)
    lo, hi = float(v.min()), float(v.max())
    d = (hi - lo) * pad or 0.5
    return lo - d, hi + d
