"""Deterministic renderers: RGB stress rasters (binary PPM) and pattern SVGs.

The raster format is uncompressed P6 PPM with a fixed header, so identical
inputs produce bit-identical files on every platform.  Channel mapping per
pixel: locate the point, interpolate the nodal stresses, then map each
component linearly onto [0, 255] with clamping and round-half-up.  Pixels
outside the domain are white.
"""

from __future__ import annotations

import math

import numpy as np

from .mesh import Mesh, locate_element


class RenderError(ValueError):
    pass


def channel_value(value: float, lo: float, hi: float) -> int:
    """Linear map [lo, hi] -> [0, 255], clamped, round-half-up."""
    x = (value - lo) / (hi - lo) * 255.0
    x = min(max(x, 0.0), 255.0)
    return int(math.floor(x + 0.5))


def render_stress_ppm(mesh: Mesh, sigma_n: np.ndarray, channel_ranges,
                      resolution: tuple, path=None) -> bytes:
    """Render the nodal stress field as a binary PPM image.

    channel_ranges: three (lo, hi) pairs for sigma_x -> red, sigma_y -> green,
    tau_xy -> blue.  resolution: (width, height) in pixels.  Rows run top to
    bottom over the mesh bounding box.
    """
    for lo, hi in channel_ranges:
        if not lo < hi:
            raise RenderError(f"degenerate channel range [{lo}, {hi}]")
    width, height = resolution
    if width < 1 or height < 1:
        raise RenderError("resolution must be at least 1x1")
    lo_xy = mesh.nodes.min(axis=0)
    hi_xy = mesh.nodes.max(axis=0)
    xs = lo_xy[0] + (np.arange(width) + 0.5) / width * (hi_xy[0] - lo_xy[0])
    ys = hi_xy[1] - (np.arange(height) + 0.5) / height * (hi_xy[1] - lo_xy[1])

    sigma_n = np.asarray(sigma_n, dtype=float)
    buf = bytearray()
    tris = mesh.elements
    for py in range(height):
        for px in range(width):
            e, bary = locate_element(mesh, (xs[px], ys[py]), with_bary=True)
            if e is None:
                buf.extend((255, 255, 255))
                continue
            tri = tris[e]
            sig = bary[0] * sigma_n[tri[0]] + bary[1] * sigma_n[tri[1]] \
                + bary[2] * sigma_n[tri[2]]
            buf.extend(channel_value(sig[k], *channel_ranges[k]) for k in range(3))

    header = f"P6\n{width} {height}\n255\n".encode("ascii")
    data = header + bytes(buf)
    if path is not None:
        with open(path, "wb") as fh:
            fh.write(data)
    return data


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def render_pattern_svg(mesh: Mesh, pattern: list, lam: float | None,
                       path=None, width_px: int = 800, max_stroke: float = 6.0) -> str:
    """Mesh outline plus the failure pattern, stroke width scaled by slip.

    ``pattern`` holds objects with a, b, slip attributes (or dicts); an empty
    pattern renders the outline with a "stable" annotation.
    """
    lo = mesh.nodes.min(axis=0)
    hi = mesh.nodes.max(axis=0)
    span = hi - lo
    margin = 0.05 * max(span[0], span[1])
    scale = width_px / (span[0] + 2 * margin)
    height_px = (span[1] + 2 * margin) * scale

    def to_px(p):
        return ((p[0] - lo[0] + margin) * scale,
                (span[1] - (p[1] - lo[1]) + margin) * scale)

    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width_px)}" '
             f'height="{_fmt(height_px)}" viewBox="0 0 {_fmt(width_px)} {_fmt(height_px)}">']
    lines.append('<g stroke="#999999" stroke-width="1" fill="none">')
    for (i, j), _tag in mesh.boundary_edges:
        x1, y1 = to_px(mesh.nodes[i])
        x2, y2 = to_px(mesh.nodes[j])
        lines.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" y2="{_fmt(y2)}"/>')
    lines.append('</g>')

    entries = [(e["a"], e["b"], e["slip"]) if isinstance(e, dict)
               else (e.a, e.b, e.slip) for e in pattern]
    if entries:
        max_slip = max(s for _, _, s in entries)
        lines.append('<g stroke="#cc2200" stroke-linecap="round" fill="none">')
        for a, b, slip in entries:
            x1, y1 = to_px(mesh.nodes[a])
            x2, y2 = to_px(mesh.nodes[b])
            w = max_stroke * slip / max_slip
            lines.append(f'<line x1="{_fmt(x1)}" y1="{_fmt(y1)}" x2="{_fmt(x2)}" '
                         f'y2="{_fmt(y2)}" stroke-width="{_fmt(w)}"/>')
        lines.append('</g>')

    label = "stable" if lam is None else f"lambda = {lam:.6g}"
    lines.append(f'<text x="10" y="20" font-family="monospace" font-size="16">{label}</text>')
    lines.append('</svg>')
    svg = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(svg)
    return svg
