"""Hand-rolled SVG charts: dependency-free, deterministic, diffable.

Every function returns the SVG document as a string; identical inputs
produce identical bytes, so chart files can be compared in tests.
"""
from __future__ import annotations

from pathlib import Path
from typing import Dict, Optional, Sequence

import numpy as np

from .exceptions import ConfigError, ShapeError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

WIDTH = 860
HEIGHT = 340
MARGIN = dict(left=64, right=16, top=34, bottom=44)


def _fmt(x: float) -> str:
    """Stable short formatting for coordinates and tick labels."""
    return f"{float(x):.6g}"


def _esc(text: str) -> str:
    return (str(text).replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def _finite_1d(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ShapeError(f"{what} must be a non-empty 1-d array, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ShapeError(f"{what} contains non-finite values")
    return arr


def _span(lo: float, hi: float):
    if hi <= lo:
        pad = 1.0 if lo == 0.0 else abs(lo) * 0.1
        return lo - pad, hi + pad
    pad = (hi - lo) * 0.05
    return lo - pad, hi + pad


def _ticks(lo: float, hi: float, n: int = 5):
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


class _Doc:
    def __init__(self, width: int, height: int, title: str):
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}" '
            'font-family="sans-serif" font-size="12">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
            f'<text x="{width / 2:.6g}" y="20" text-anchor="middle" '
            f'font-size="15">{_esc(title)}</text>',
        ]

    def add(self, element: str) -> None:
        self.parts.append(element)

    def text(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _frame(doc: _Doc, width: int, height: int, x_label: str, y_label: str,
           x_lo: float, x_hi: float, y_lo: float, y_hi: float,
           x_tick_labels: Optional[Sequence[str]] = None,
           x_tick_pos: Optional[Sequence[float]] = None):
    """Axes, ticks, and labels; returns the data-to-pixel transforms."""
    m = MARGIN
    px0, px1 = m["left"], width - m["right"]
    py0, py1 = height - m["bottom"], m["top"]

    def sx(x: float) -> float:
        return px0 + (x - x_lo) / (x_hi - x_lo) * (px1 - px0)

    def sy(y: float) -> float:
        return py0 + (y - y_lo) / (y_hi - y_lo) * (py1 - py0)

    doc.add(f'<line x1="{px0}" y1="{py0}" x2="{px1}" y2="{py0}" '
            'stroke="black"/>')
    doc.add(f'<line x1="{px0}" y1="{py0}" x2="{px0}" y2="{py1}" '
            'stroke="black"/>')
    for y in _ticks(y_lo, y_hi):
        doc.add(f'<line x1="{px0 - 4}" y1="{_fmt(sy(y))}" x2="{px0}" '
                f'y2="{_fmt(sy(y))}" stroke="black"/>')
        doc.add(f'<text x="{px0 - 8}" y="{_fmt(sy(y) + 4)}" '
                f'text-anchor="end">{_fmt(y)}</text>')
    if x_tick_labels is None:
        for x in _ticks(x_lo, x_hi):
            doc.add(f'<line x1="{_fmt(sx(x))}" y1="{py0}" x2="{_fmt(sx(x))}" '
                    f'y2="{py0 + 4}" stroke="black"/>')
            doc.add(f'<text x="{_fmt(sx(x))}" y="{py0 + 18}" '
                    f'text-anchor="middle">{_fmt(x)}</text>')
    else:
        for label, x in zip(x_tick_labels, x_tick_pos):
            doc.add(f'<text x="{_fmt(sx(x))}" y="{py0 + 18}" '
                    f'text-anchor="middle">{_esc(label)}</text>')
    doc.add(f'<text x="{(px0 + px1) / 2:.6g}" y="{height - 8}" '
            f'text-anchor="middle">{_esc(x_label)}</text>')
    doc.add(f'<text x="16" y="{(py0 + py1) / 2:.6g}" text-anchor="middle" '
            f'transform="rotate(-90 16 {(py0 + py1) / 2:.6g})">'
            f'{_esc(y_label)}</text>')
    return sx, sy


def _legend(doc: _Doc, names: Sequence[str], width: int):
    x = width - MARGIN["right"] - 150
    y = MARGIN["top"] + 4
    for i, name in enumerate(names):
        color = PALETTE[i % len(PALETTE)]
        doc.add(f'<rect x="{x}" y="{y + 16 * i}" width="10" height="10" '
                f'fill="{color}"/>')
        doc.add(f'<text x="{x + 14}" y="{y + 16 * i + 9}">{_esc(name)}</text>')


def line_chart(series: Dict[str, tuple], title: str, x_label: str,
               y_label: str, width: int = WIDTH, height: int = HEIGHT) -> str:
    """Multi-series line chart; ``series`` maps name -> (x, y) arrays."""
    if not series:
        raise ConfigError("line_chart needs at least one series")
    cleaned = {}
    for name, (xs, ys) in series.items():
        xs = _finite_1d(xs, f"series {name!r} x")
        ys = _finite_1d(ys, f"series {name!r} y")
        if xs.shape != ys.shape:
            raise ShapeError(f"series {name!r} x/y length mismatch")
        cleaned[name] = (xs, ys)
    x_lo, x_hi = _span(min(v[0].min() for v in cleaned.values()),
                       max(v[0].max() for v in cleaned.values()))
    y_lo, y_hi = _span(min(v[1].min() for v in cleaned.values()),
                       max(v[1].max() for v in cleaned.values()))
    doc = _Doc(width, height, title)
    sx, sy = _frame(doc, width, height, x_label, y_label,
                    x_lo, x_hi, y_lo, y_hi)
    for i, name in enumerate(cleaned):
        xs, ys = cleaned[name]
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}"
                          for x, y in zip(xs, ys))
        doc.add(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" '
                f'points="{points}"/>')
    _legend(doc, list(cleaned), width)
    return doc.text()


def bar_chart(labels: Sequence[str], series: Dict[str, Sequence[float]],
              title: str, x_label: str, y_label: str,
              width: int = WIDTH, height: int = HEIGHT) -> str:
    """Grouped bar chart; one group per label, one bar per series."""
    if not labels or not series:
        raise ConfigError("bar_chart needs labels and at least one series")
    values = {}
    for name, vals in series.items():
        vals = _finite_1d(vals, f"series {name!r}")
        if vals.shape[0] != len(labels):
            raise ShapeError(
                f"series {name!r} has {vals.shape[0]} values for "
                f"{len(labels)} labels"
            )
        values[name] = vals
    y_min = min(0.0, min(v.min() for v in values.values()))
    y_lo, y_hi = _span(y_min, max(v.max() for v in values.values()))
    doc = _Doc(width, height, title)
    n_groups = len(labels)
    centers = [i + 0.5 for i in range(n_groups)]
    sx, sy = _frame(doc, width, height, x_label, y_label, 0.0,
                    float(n_groups), y_lo, y_hi,
                    x_tick_labels=list(labels), x_tick_pos=centers)
    n_series = len(values)
    slot = 0.8 / n_series              # group width 0.8, centered
    for i, name in enumerate(values):
        color = PALETTE[i % len(PALETTE)]
        for g, v in enumerate(values[name]):
            x_left = g + 0.1 + i * slot
            x0, x1 = sx(x_left), sx(x_left + slot)
            y_base, y_val = sy(max(0.0, y_lo)), sy(v)
            top = min(y_base, y_val)
            h = abs(y_base - y_val)
            doc.add(f'<rect x="{_fmt(x0)}" y="{_fmt(top)}" '
                    f'width="{_fmt(x1 - x0)}" height="{_fmt(h)}" '
                    f'fill="{color}"/>')
    _legend(doc, list(values), width)
    return doc.text()


def save_svg(text: str, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
