"""Minimal SVG line-chart writer; no plotting dependency."""
from __future__ import annotations

from typing import Dict, Sequence

import numpy as np

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b")

_W, _H = 720, 480
_ML, _MR, _MT, _MB = 70, 20, 30, 50


def _ticks(lo: float, hi: float, n: int = 6):
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / max(n - 1, 1)
    mag = 10.0 ** np.floor(np.log10(raw))
    for m in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= m * mag:
            step = m * mag
            break
    start = np.ceil(lo / step) * step
    return np.arange(start, hi + 0.5 * step, step)


def write_line_chart(
    path: str,
    x: Sequence[float],
    series: Dict[str, Sequence[float]],
    title: str = "",
    xlabel: str = "",
    ylabel: str = "",
) -> None:
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    finite = np.concatenate([v[np.isfinite(v)] for v in ys.values()] + [x])
    xlo, xhi = float(x.min()), float(x.max())
    ylo = float(min(0.0, np.nanmin([np.nanmin(v) for v in ys.values()])))
    yhi = float(np.nanmax([np.nanmax(v) for v in ys.values()]))
    if yhi <= ylo:
        yhi = ylo + 1.0
    pad = 0.05 * (yhi - ylo)
    ylo, yhi = ylo - pad, yhi + pad

    def sx(v):
        return _ML + (v - xlo) / (xhi - xlo) * (_W - _ML - _MR)

    def sy(v):
        return _H - _MB - (v - ylo) / (yhi - ylo) * (_H - _MT - _MB)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W/2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
    ]
    axis_style = 'stroke="black" stroke-width="1"'
    parts.append(f'<line x1="{_ML}" y1="{_H-_MB}" x2="{_W-_MR}" y2="{_H-_MB}" {axis_style}/>')
    parts.append(f'<line x1="{_ML}" y1="{_MT}" x2="{_ML}" y2="{_H-_MB}" {axis_style}/>')
    for tx in _ticks(xlo, xhi):
        parts.append(
            f'<line x1="{sx(tx):.1f}" y1="{_H-_MB}" x2="{sx(tx):.1f}" y2="{_H-_MB+5}" {axis_style}/>'
            f'<text x="{sx(tx):.1f}" y="{_H-_MB+18}" text-anchor="middle" font-size="10">{tx:.4g}</text>'
        )
    for ty in _ticks(ylo, yhi):
        parts.append(
            f'<line x1="{_ML-5}" y1="{sy(ty):.1f}" x2="{_ML}" y2="{sy(ty):.1f}" {axis_style}/>'
            f'<text x="{_ML-8}" y="{sy(ty)+3:.1f}" text-anchor="end" font-size="10">{ty:.4g}</text>'
        )
    parts.append(
        f'<text x="{(_ML+_W-_MR)/2:.1f}" y="{_H-12}" text-anchor="middle" font-size="12">{xlabel}</text>'
    )
    parts.append(
        f'<text x="16" y="{(_MT+_H-_MB)/2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {(_MT+_H-_MB)/2:.1f})">{ylabel}</text>'
    )
    for i, (label, y) in enumerate(ys.items()):
        color = _COLORS[i % len(_COLORS)]
        pts = " ".join(
            f"{sx(xx):.2f},{sy(yy):.2f}" for xx, yy in zip(x, y) if np.isfinite(yy)
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = _MT + 16 * (i + 1)
        parts.append(
            f'<line x1="{_W-_MR-130}" y1="{ly}" x2="{_W-_MR-105}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
            f'<text x="{_W-_MR-100}" y="{ly+4}" font-size="11">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
