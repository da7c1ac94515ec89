"""Static SVG histograms of baseline error distributions with marker lines.

The output depends only on the inputs: no timestamps, ids or external
assets, and every number is printed with fixed formatting.
"""
import math
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["Marker", "HistogramSpec", "histogram_bins", "emit_histogram"]

COLORS = {"algorithm": "#d62728", "comparison": "#000000", "other": "#1f77b4"}

WIDTH, HEIGHT = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 60


@dataclass(frozen=True)
class Marker:
    label: str
    value: float
    role: str = "algorithm"  # algorithm (red), comparison (black) or other


@dataclass
class HistogramSpec:
    bins: int = 30
    markers: list = field(default_factory=list)
    title: str = ""
    xlabel: str = "final control error e"

    def __post_init__(self):
        if int(self.bins) < 1:
            raise ValueError("bin count must be at least 1")
        for m in self.markers:
            if not math.isfinite(m.value):
                raise ValueError(f"marker {m.label!r} has a non-finite value")
            if m.role not in COLORS:
                raise ValueError(f"unknown marker role {m.role!r}")


def sig4(v):
    """Format a number with 4 significant digits."""
    return format(float(v), ".4g")


def histogram_bins(values, bins):
    """Counts and edges over ``[min, max]`` of ``values``; a zero-width range
    is widened symmetrically so the single value lands in one bin."""
    values = np.asarray(values, dtype=float)
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        pad = 0.5 * max(abs(lo), 1.0) * 1e-3
        lo, hi = lo - pad, hi + pad
    counts, edges = np.histogram(values, bins=int(bins), range=(lo, hi))
    return counts, edges


def _f(v):
    return f"{v:.2f}"


def emit_histogram(dist, spec, path):
    """Write an SVG histogram of ``dist.errors`` with ``spec.markers`` drawn
    as labelled vertical lines. Non-finite errors are left out and counted
    in the caption."""
    errors = np.asarray(getattr(dist, "errors", dist), dtype=float)
    if errors.size == 0:
        raise ValueError("cannot draw an empty distribution")
    finite = errors[np.isfinite(errors)]
    if finite.size == 0:
        raise ValueError("distribution has no finite errors")
    counts, edges = histogram_bins(finite, spec.bins)
    x_lo = min([edges[0]] + [m.value for m in spec.markers])
    x_hi = max([edges[-1]] + [m.value for m in spec.markers])
    span = x_hi - x_lo
    x_lo -= 0.02 * span
    x_hi += 0.02 * span
    pw = WIDTH - LEFT - RIGHT
    ph = HEIGHT - TOP - BOTTOM
    cmax = max(int(counts.max()), 1)

    def X(v):
        return LEFT + (v - x_lo) / (x_hi - x_lo) * pw

    def Y(c):
        return TOP + ph - c / cmax * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
    ]
    if spec.title:
        out.append(f'<text x="{WIDTH / 2:.2f}" y="20" text-anchor="middle" font-size="14">'
                   f'{escape(spec.title)}</text>')
    for c, a, b in zip(counts, edges[:-1], edges[1:]):
        if c == 0:
            continue
        x0, x1 = X(a), X(b)
        out.append(f'<rect class="bar" x="{_f(x0)}" y="{_f(Y(c))}" width="{_f(max(x1 - x0, 0.5))}" '
                   f'height="{_f(Y(0) - Y(c))}" fill="#9ecae1" stroke="#3182bd" '
                   f'stroke-width="0.5"><title>[{sig4(a)}, {sig4(b)}): {c}</title></rect>')
    # axes
    y0 = TOP + ph
    out.append(f'<line x1="{LEFT}" y1="{y0}" x2="{LEFT + pw}" y2="{y0}" stroke="#000000"/>')
    out.append(f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{y0}" stroke="#000000"/>')
    for i in range(6):
        v = x_lo + (x_hi - x_lo) * i / 5
        x = X(v)
        out.append(f'<line x1="{_f(x)}" y1="{y0}" x2="{_f(x)}" y2="{y0 + 5}" stroke="#000000"/>')
        out.append(f'<text x="{_f(x)}" y="{y0 + 18}" text-anchor="middle">{sig4(v)}</text>')
    for c in sorted({0, cmax // 2, cmax}):
        y = Y(c)
        out.append(f'<line x1="{LEFT - 5}" y1="{_f(y)}" x2="{LEFT}" y2="{_f(y)}" stroke="#000000"/>')
        out.append(f'<text x="{LEFT - 8}" y="{_f(y + 4)}" text-anchor="end">{c}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 15}" text-anchor="middle">'
               f'{escape(spec.xlabel)}</text>')
    out.append(f'<text x="15" y="{TOP + ph / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 15 {TOP + ph / 2:.2f})">selections</text>')
    for k, m in enumerate(spec.markers):
        x = X(m.value)
        color = COLORS[m.role]
        out.append(f'<line class="marker" x1="{_f(x)}" y1="{TOP}" x2="{_f(x)}" y2="{y0}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_f(x + 4)}" y="{TOP + 14 + 14 * k}" fill="{color}">'
                   f'{escape(m.label)} = {sig4(m.value)}</text>')
    dropped = errors.size - finite.size
    note = f"n = {errors.size}" + (f", {dropped} failed" if dropped else "")
    out.append(f'<text x="{WIDTH - RIGHT}" y="{HEIGHT - 15}" text-anchor="end">{note}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    with open(path, "w") as fh:
        fh.write(text)
    return text
