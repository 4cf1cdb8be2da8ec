"""Minimal deterministic SVG plots: line series, stem spectra, curve overlays.

Hand-rolled on purpose: byte-identical output for identical input, no
rendering-library version drift.  Every file carries the config hash in a
metadata comment.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

W, H = 640, 480
ML, MR, MT, MB = 70, 20, 20, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _fmt(x):
    return f"{x:.6g}"


def _ticks(lo, hi, n=6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    step = mag * min(s for s in (1, 2, 5, 10) if raw / mag <= s)
    start = np.ceil(lo / step) * step
    return list(np.arange(start, hi + 0.5 * step, step))


class _Canvas:
    def __init__(self, title, hash_comment):
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}">',
            f"<!-- torusflow config-hash: {hash_comment} -->",
            f'<rect width="{W}" height="{H}" fill="white"/>',
            f'<text x="{W//2}" y="14" text-anchor="middle" font-family="monospace" '
            f'font-size="12">{title}</text>',
        ]

    def line(self, x0, y0, x1, y1, color="#000000", width=1.0):
        self.parts.append(
            f'<line x1="{_fmt(x0)}" y1="{_fmt(y0)}" x2="{_fmt(x1)}" y2="{_fmt(y1)}" '
            f'stroke="{color}" stroke-width="{_fmt(width)}"/>'
        )

    def poly(self, pts, color, width=1.2):
        coords = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in pts)
        self.parts.append(
            f'<polyline points="{coords}" fill="none" stroke="{color}" '
            f'stroke-width="{_fmt(width)}"/>'
        )

    def text(self, x, y, s, size=11, anchor="middle"):
        self.parts.append(
            f'<text x="{_fmt(x)}" y="{_fmt(y)}" text-anchor="{anchor}" '
            f'font-family="monospace" font-size="{size}">{s}</text>'
        )

    def circle(self, x, y, r, color):
        self.parts.append(
            f'<circle cx="{_fmt(x)}" cy="{_fmt(y)}" r="{_fmt(r)}" fill="{color}"/>'
        )

    def write(self, path):
        self.parts.append("</svg>")
        with open(path, "w") as fh:
            fh.write("\n".join(self.parts) + "\n")


def _axes(canvas, xlo, xhi, ylo, yhi, xlabel, ylabel, logy=False):
    def sx(x):
        return ML + (x - xlo) / (xhi - xlo) * (W - ML - MR)

    def sy(y):
        return H - MB - (y - ylo) / (yhi - ylo) * (H - MT - MB)

    canvas.line(ML, H - MB, W - MR, H - MB)
    canvas.line(ML, MT, ML, H - MB)
    for t in _ticks(xlo, xhi):
        canvas.line(sx(t), H - MB, sx(t), H - MB + 4)
        canvas.text(sx(t), H - MB + 16, _fmt(t), size=9)
    for t in _ticks(ylo, yhi):
        canvas.line(ML - 4, sy(t), ML, sy(t))
        label = _fmt(10.0**t) if logy else _fmt(t)
        canvas.text(ML - 8, sy(t) + 3, label, size=9, anchor="end")
    canvas.text((ML + W - MR) / 2, H - 10, xlabel)
    canvas.text(14, (MT + H - MB) / 2, ylabel, size=10)
    return sx, sy


def line_plot(path, xs_list, ys_list, labels, title, xlabel, ylabel,
              logy=False, hash_comment=""):
    """One or more series; logy plots log10 of positive values."""
    if not xs_list or any(len(x) == 0 for x in xs_list):
        raise ConfigError("refusing to plot an empty series")
    cmped = []
    for xs, ys in zip(xs_list, ys_list):
        xs = np.asarray(xs, float)
        ys = np.asarray(ys, float)
        if logy:
            keep = ys > 0
            xs, ys = xs[keep], np.log10(ys[keep])
        if xs.size == 0:
            raise ConfigError("series empty after log filtering")
        cmped.append((xs, ys))
    xlo = min(float(x.min()) for x, _ in cmped)
    xhi = max(float(x.max()) for x, _ in cmped)
    ylo = min(float(y.min()) for _, y in cmped)
    yhi = max(float(y.max()) for _, y in cmped)
    pad = 0.05 * max(yhi - ylo, 1e-12)
    c = _Canvas(title, hash_comment)
    sx, sy = _axes(c, xlo, xhi, ylo - pad, yhi + pad, xlabel, ylabel, logy=logy)
    for i, (xs, ys) in enumerate(cmped):
        c.poly([(sx(x), sy(y)) for x, y in zip(xs, ys)], COLORS[i % len(COLORS)])
        if labels and i < len(labels):
            c.text(W - MR - 6, MT + 16 + 14 * i, labels[i], anchor="end", size=10)
    c.write(path)


def stem_plot(path, values, title, hash_comment=""):
    """Spectrum stems: index vs value with a zero baseline."""
    values = np.asarray(values, float)
    if values.size == 0:
        raise ConfigError("refusing to plot an empty spectrum")
    ylo, yhi = min(float(values.min()), 0.0), max(float(values.max()), 0.0)
    pad = 0.05 * max(yhi - ylo, 1e-12)
    c = _Canvas(title, hash_comment)
    sx, sy = _axes(c, -0.5, values.size - 0.5, ylo - pad, yhi + pad, "index", "eigenvalue")
    c.line(sx(-0.5), sy(0.0), sx(values.size - 0.5), sy(0.0), color="#999999")
    for i, v in enumerate(values):
        c.line(sx(i), sy(0.0), sx(i), sy(v), color=COLORS[0], width=1.5)
        c.circle(sx(i), sy(v), 2.5, COLORS[1])
    c.write(path)


def curve_overlay(path, curves, labels, title, hash_comment=""):
    """Marker loops of one or more curves drawn in the unit cell."""
    if not curves:
        raise ConfigError("refusing to plot without curves")
    c = _Canvas(title, hash_comment)
    size = min(W - ML - MR, H - MT - MB)

    def sx(x):
        return ML + x * size

    def sy(y):
        return H - MB - y * size

    c.parts.append(
        f'<rect x="{ML}" y="{H - MB - size}" width="{size}" height="{size}" '
        f'fill="none" stroke="#333333"/>'
    )
    for ci, curve in enumerate(curves):
        color = COLORS[ci % len(COLORS)]
        for lp in curve.components:
            m = lp.markers
            # split the polyline at wrap-around jumps so strands stay separate
            jumps = np.nonzero(
                np.linalg.norm(np.diff(m, axis=0), axis=1) > 0.5
            )[0]
            start = 0
            for j in list(jumps) + [m.shape[0] - 1]:
                seg = m[start : j + 1]
                if seg.shape[0] > 1:
                    c.poly([(sx(p[0]), sy(p[1])) for p in seg], color)
                start = j + 1
        if labels and ci < len(labels):
            c.text(W - MR - 6, MT + 16 + 14 * ci, labels[ci], anchor="end", size=10)
    c.write(path)
