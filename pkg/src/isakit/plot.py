"""Deterministic SVG scatter plots of the instance space."""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
SIZE = 640
MARGIN = 60
LEGEND_W = 170


class PlotError(ValueError):
    pass


def scale_color(t: float) -> str:
    """Red (t=0) to blue (t=1)."""
    t = min(max(float(t), 0.0), 1.0)
    return "#{:02x}00{:02x}".format(round(255 * (1 - t)), round(255 * t))


def continuous_colors(values):
    v = np.asarray(values, dtype=float)
    lo, hi = float(v.min()), float(v.max())
    if hi == lo:
        return [scale_color(0.5)] * len(v), lo, hi
    return [scale_color((x - lo) / (hi - lo)) for x in v], lo, hi


def categorical_colors(labels):
    cats = sorted(set(labels))
    cmap = {c: PALETTE[j % len(PALETTE)] for j, c in enumerate(cats)}
    return [cmap[c] for c in labels], cmap


def _fmt(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


class Canvas:
    """Maps instance-space coordinates to SVG pixels with a 1:1 aspect."""

    def __init__(self, xy_extent):
        pts = np.asarray(xy_extent, dtype=float).reshape(-1, 2)
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        span = max(float((hi - lo).max()), 1e-12)
        pad = 0.05 * span
        self.x0 = float((lo[0] + hi[0]) / 2 - span / 2 - pad)
        self.y0 = float((lo[1] + hi[1]) / 2 - span / 2 - pad)
        self.span = span + 2 * pad
        self.px = SIZE - 2 * MARGIN
        self.parts = []

    def x(self, v):
        return MARGIN + (v - self.x0) / self.span * self.px

    def y(self, v):
        return SIZE - MARGIN - (v - self.y0) / self.span * self.px

    def ring_path(self, coords) -> str:
        c = list(coords)
        if len(c) > 1 and tuple(c[0]) == tuple(c[-1]):
            c = c[:-1]
        return "M" + " L".join(f"{_fmt(self.x(a))},{_fmt(self.y(b))}" for a, b in c) + " Z"

    def axes(self, title: str):
        p = self.parts
        p.append(f'<rect x="{MARGIN}" y="{MARGIN}" width="{self.px}" height="{self.px}" '
                 'fill="none" stroke="#000" stroke-width="1"/>')
        for j in range(5):
            v = self.x0 + self.span * j / 4
            p.append(f'<text x="{_fmt(self.x(v))}" y="{SIZE - MARGIN + 16}" font-size="11" '
                     f'text-anchor="middle">{v:.2f}</text>')
            w = self.y0 + self.span * j / 4
            p.append(f'<text x="{MARGIN - 6}" y="{_fmt(self.y(w) + 4)}" font-size="11" '
                     f'text-anchor="end">{w:.2f}</text>')
        p.append(f'<text x="{SIZE / 2:.0f}" y="{SIZE - 16}" font-size="14" text-anchor="middle">z1</text>')
        p.append(f'<text x="16" y="{SIZE / 2:.0f}" font-size="14" text-anchor="middle" '
                 f'transform="rotate(-90 16 {SIZE / 2:.0f})">z2</text>')
        p.append(f'<text x="{SIZE / 2:.0f}" y="{MARGIN - 20}" font-size="15" text-anchor="middle">'
                 f'{escape(title)}</text>')

    def points(self, Z, colors, radius=3.0):
        for (a, b), col in zip(np.asarray(Z, dtype=float).T, colors):
            self.parts.append(f'<circle cx="{_fmt(self.x(a))}" cy="{_fmt(self.y(b))}" r="{radius}" '
                              f'fill="{col}" stroke="none"/>')

    def polygon(self, geom, fill, opacity=0.35, stroke=None, label=""):
        polys = list(geom.geoms) if hasattr(geom, "geoms") else [geom]
        for poly in polys:
            if poly.is_empty:
                continue
            d = " ".join([self.ring_path(poly.exterior.coords)] +
                         [self.ring_path(r.coords) for r in poly.interiors])
            self.parts.append(f'<path d="{d}" fill="{fill}" fill-opacity="{opacity}" fill-rule="evenodd" '
                              f'stroke="{stroke or fill}" stroke-width="1.2" data-label="{escape(label)}"/>')

    def outline(self, coords, stroke="#000", dash="6,3"):
        self.parts.append(f'<path d="{self.ring_path(coords)}" fill="none" stroke="{stroke}" '
                          f'stroke-width="1.5" stroke-dasharray="{dash}"/>')

    def quadrants(self):
        p = self.parts
        if self.x0 < 0 < self.x0 + self.span:
            p.append(f'<line x1="{_fmt(self.x(0))}" y1="{MARGIN}" x2="{_fmt(self.x(0))}" y2="{SIZE - MARGIN}" '
                     'stroke="#888" stroke-dasharray="2,2"/>')
        if self.y0 < 0 < self.y0 + self.span:
            p.append(f'<line x1="{MARGIN}" y1="{_fmt(self.y(0))}" x2="{SIZE - MARGIN}" y2="{_fmt(self.y(0))}" '
                     'stroke="#888" stroke-dasharray="2,2"/>')
        inset = 14
        for label, xx, yy, anchor in (("Q1", SIZE - MARGIN - inset, MARGIN + inset + 6, "end"),
                                      ("Q2", MARGIN + inset, MARGIN + inset + 6, "start"),
                                      ("Q3", MARGIN + inset, SIZE - MARGIN - inset, "start"),
                                      ("Q4", SIZE - MARGIN - inset, SIZE - MARGIN - inset, "end")):
            p.append(f'<text x="{xx}" y="{yy}" font-size="12" fill="#888" text-anchor="{anchor}">{label}</text>')

    def legend_items(self, items):
        x = SIZE + 10
        for j, (label, col) in enumerate(items):
            y = MARGIN + 18 * j
            self.parts.append(f'<rect x="{x}" y="{y}" width="12" height="12" fill="{col}"/>')
            self.parts.append(f'<text x="{x + 18}" y="{y + 10}" font-size="12">{escape(str(label))}</text>')

    def colorbar(self, lo, hi):
        x = SIZE + 10
        steps = 20
        h = 200
        for j in range(steps):
            t = 1 - j / (steps - 1)
            self.parts.append(f'<rect x="{x}" y="{MARGIN + j * h / steps:.2f}" width="16" '
                              f'height="{h / steps + 0.5:.2f}" fill="{scale_color(t)}"/>')
        self.parts.append(f'<text x="{x + 22}" y="{MARGIN + 10}" font-size="12">{hi:.4g} (max)</text>')
        self.parts.append(f'<text x="{x + 22}" y="{MARGIN + h}" font-size="12">{lo:.4g} (min)</text>')

    def render(self, comment: str = "") -> str:
        head = ['<?xml version="1.0" encoding="UTF-8"?>']
        if comment:
            head.append(f"<!-- {escape(comment)} -->")
        head.append(f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE + LEGEND_W}" '
                    f'height="{SIZE}" viewBox="0 0 {SIZE + LEGEND_W} {SIZE}">')
        head.append(f'<rect width="{SIZE + LEGEND_W}" height="{SIZE}" fill="#fff"/>')
        return "\n".join(head + self.parts + ["</svg>"]) + "\n"


def plot_space(Z, layer: str, *, sources=None, performance=None, features=None, footprints=None,
               boundary=None, quadrants: bool = False, comment: str = "") -> str:
    """Render one layer of the instance space as SVG text.

    layer: ``sources``, ``performance:<technique>``, ``feature:<name>``,
    ``footprints`` / ``footprints:<technique>`` or ``boundary``.
    ``performance`` and ``features`` map names to per-instance values;
    ``footprints`` is a list of Footprint; ``boundary`` is a k x 2 hull.
    """
    Z = np.asarray(Z, dtype=float)
    kind, _, arg = layer.partition(":")
    extent = [Z.T]
    if kind == "boundary":
        if boundary is None:
            raise PlotError("no boundary available")
        extent.append(np.asarray(boundary, dtype=float))
    canvas = Canvas(np.vstack(extent))

    if kind == "sources":
        labels = list(sources) if sources is not None else ["all"] * Z.shape[1]
        cols, cmap = categorical_colors(labels)
        canvas.points(Z, cols)
        canvas.legend_items(cmap.items())
        title = "Instance sources"
    elif kind in ("performance", "feature"):
        table = performance if kind == "performance" else features
        if not table or arg not in table:
            valid = ", ".join(sorted(table or {}))
            raise PlotError(f"unknown {kind} {arg!r}; valid: {valid}")
        cols, lo, hi = continuous_colors(table[arg])
        canvas.points(Z, cols)
        canvas.colorbar(lo, hi)
        title = f"{kind.capitalize()}: {arg}"
    elif kind == "footprints":
        fps = list(footprints or [])
        techs = sorted({f.technique for f in fps})
        if arg:
            if arg not in techs:
                raise PlotError(f"unknown technique {arg!r}; valid: {', '.join(techs)}")
            fps = [f for f in fps if f.technique == arg]
        canvas.points(Z, ["#bbbbbb"] * Z.shape[1], radius=2.0)
        cmap = {t: PALETTE[j % len(PALETTE)] for j, t in enumerate(techs)}
        items = []
        for f in fps:
            col = cmap[f.technique] if not arg else ("#2ca02c" if f.kind == "good" else "#1f3fb4")
            canvas.polygon(f.geometry, col, label=f"{f.technique}/{f.kind}")
            items.append((f"{f.technique} ({f.kind})", col))
        canvas.legend_items(items)
        title = f"Footprints{': ' + arg if arg else ''}"
    elif kind == "boundary":
        canvas.points(Z, ["#555555"] * Z.shape[1], radius=2.0)
        canvas.outline(np.asarray(boundary, dtype=float))
        title = "Instance space boundary"
    else:
        raise PlotError(f"unknown layer {layer!r}")

    if quadrants:
        canvas.quadrants()
    canvas.axes(title)
    return canvas.render(comment)
