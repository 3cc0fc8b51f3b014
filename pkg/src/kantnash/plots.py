"""Minimal self-contained SVG line charts with byte-stable output."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

log = logging.getLogger(__name__)

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf", "#000000")

PANEL_W, PANEL_H = 420, 300
MARGIN = dict(left=64, right=16, top=34, bottom=48)
LEGEND_W = 130


@dataclass
class Panel:
    title: str
    xlabel: str
    ylabel: str
    series: dict[str, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def add(self, name: str, x, y) -> None:
        self.series[name] = (np.asarray(x, dtype=float), np.asarray(y, dtype=float))

    @property
    def empty(self) -> bool:
        return not any(len(x) for x, _ in self.series.values())


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _ticks(lo: float, hi: float, count: int = 5) -> np.ndarray:
    if hi - lo <= 0:
        return np.array([lo])
    raw = (hi - lo) / count
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min((s * mag for s in (1, 2, 5, 10) if s * mag >= raw), default=raw)
    start = np.ceil(lo / step - 1e-9) * step
    return np.arange(start, hi + 0.5 * step * 1e-6, step)


def _limits(values: list[np.ndarray]) -> tuple[float, float]:
    allv = np.concatenate([v[np.isfinite(v)] for v in values]) if values else np.zeros(1)
    if allv.size == 0:
        return 0.0, 1.0
    lo, hi = float(allv.min()), float(allv.max())
    if hi - lo < 1e-12:
        pad = max(abs(lo) * 0.05, 0.05)
        return lo - pad, hi + pad
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _panel_svg(panel: Panel, ox: float, oy: float) -> list[str]:
    xs = [x for x, _ in panel.series.values()]
    ys = [y for _, y in panel.series.values()]
    x0, x1 = _limits(xs)
    y0, y1 = _limits(ys)
    left, top = ox + MARGIN["left"], oy + MARGIN["top"]
    w = PANEL_W - MARGIN["left"] - MARGIN["right"]
    h = PANEL_H - MARGIN["top"] - MARGIN["bottom"]

    def sx(v):
        return left + (v - x0) / (x1 - x0) * w

    def sy(v):
        return top + h - (v - y0) / (y1 - y0) * h

    out = [f'<g class="panel">',
           f'<rect x="{_fmt(left)}" y="{_fmt(top)}" width="{_fmt(w)}" height="{_fmt(h)}" '
           f'fill="none" stroke="#444"/>',
           f'<text x="{_fmt(left + w / 2)}" y="{_fmt(oy + 20)}" text-anchor="middle" '
           f'font-size="14">{escape(panel.title)}</text>',
           f'<text x="{_fmt(left + w / 2)}" y="{_fmt(top + h + 38)}" text-anchor="middle" '
           f'font-size="12">{escape(panel.xlabel)}</text>',
           f'<text x="{_fmt(ox + 14)}" y="{_fmt(top + h / 2)}" text-anchor="middle" font-size="12" '
           f'transform="rotate(-90 {_fmt(ox + 14)} {_fmt(top + h / 2)})">{escape(panel.ylabel)}</text>']
    for t in _ticks(x0, x1):
        out.append(f'<line x1="{_fmt(sx(t))}" y1="{_fmt(top + h)}" x2="{_fmt(sx(t))}" '
                   f'y2="{_fmt(top + h + 4)}" stroke="#444"/>')
        out.append(f'<text x="{_fmt(sx(t))}" y="{_fmt(top + h + 17)}" text-anchor="middle" '
                   f'font-size="10">{t:.4g}</text>')
    for t in _ticks(y0, y1):
        out.append(f'<line x1="{_fmt(left - 4)}" y1="{_fmt(sy(t))}" x2="{_fmt(left)}" '
                   f'y2="{_fmt(sy(t))}" stroke="#444"/>')
        out.append(f'<text x="{_fmt(left - 6)}" y="{_fmt(sy(t) + 3)}" text-anchor="end" '
                   f'font-size="10">{t:.4g}</text>')
    for i, (name, (x, y)) in enumerate(panel.series.items()):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, y) if np.isfinite(b))
        if len(x) > 1:
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        if len(x) <= 41:
            out.extend(f'<circle cx="{_fmt(sx(a))}" cy="{_fmt(sy(b))}" r="2.2" fill="{color}"/>'
                       for a, b in zip(x, y) if np.isfinite(b))
        ly = top + 8 + 16 * i
        lx = ox + PANEL_W + 6
        out.append(f'<line x1="{_fmt(lx)}" y1="{_fmt(ly)}" x2="{_fmt(lx + 18)}" y2="{_fmt(ly)}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_fmt(lx + 22)}" y="{_fmt(ly + 4)}" font-size="11">{escape(name)}</text>')
    out.append("</g>")
    return out


def render(panels: list[Panel], title: str = "") -> str:
    """SVG document with the panels laid out left to right."""
    width = len(panels) * (PANEL_W + LEGEND_W)
    height = PANEL_H + (24 if title else 0)
    shift = 24 if title else 0
    body = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
            f'viewBox="0 0 {width} {height}" font-family="sans-serif">',
            f'<rect width="{width}" height="{height}" fill="white"/>']
    if title:
        body.append(f'<text x="{width / 2:.2f}" y="18" text-anchor="middle" font-size="15">'
                    f'{escape(title)}</text>')
    for i, panel in enumerate(panels):
        body.extend(_panel_svg(panel, i * (PANEL_W + LEGEND_W), shift))
    body.append("</svg>")
    return "\n".join(body) + "\n"


def write_chart(path: Path, panels: list[Panel], title: str = "") -> Path | None:
    """Write a chart; panels without data are dropped and an all-empty chart is skipped."""
    panels = [p for p in panels if not p.empty]
    if not panels:
        log.warning("no data for %s; plot skipped", path.name)
        return None
    path.write_text(render(panels, title), encoding="utf-8")
    return path
