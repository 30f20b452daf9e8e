"""Bare SVG charts: actual-vs-predicted curves and an RMSE bar comparison."""
from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ("#222222", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e")
WIDTH, HEIGHT, PAD = 720, 320, 40


def _frame(title: str, body: list[str]) -> str:
    return "\n".join([
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        *body,
        "</svg>",
    ]) + "\n"


def _scale(lo: float, hi: float, a: float, b: float):
    span = hi - lo or 1.0
    return lambda v: a + (v - lo) / span * (b - a)


def line_chart(curves: Mapping[str, Sequence[float]], title: str = "Actual vs Prediction") -> str:
    arrays = {k: np.asarray(v, dtype=float) for k, v in curves.items()}
    n = max((len(v) for v in arrays.values()), default=0)
    allv = np.concatenate([v for v in arrays.values() if len(v)]) if n else np.zeros(1)
    sx = _scale(0, max(n - 1, 1), PAD, WIDTH - PAD)
    sy = _scale(float(allv.min()), float(allv.max()), HEIGHT - PAD, PAD)
    body = [f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="#888"/>',
            f'<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{HEIGHT - PAD}" stroke="#888"/>',
            f'<text x="{PAD - 4}" y="{PAD + 4}" text-anchor="end">{allv.max():.3g}</text>',
            f'<text x="{PAD - 4}" y="{HEIGHT - PAD}" text-anchor="end">{allv.min():.3g}</text>']
    for i, (label, v) in enumerate(arrays.items()):
        colour = PALETTE[i % len(PALETTE)]
        pts = " ".join(f"{sx(j):.2f},{sy(y):.2f}" for j, y in enumerate(v))
        body.append(f'<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{pts}"/>')
        body.append(f'<text x="{WIDTH - PAD}" y="{PAD + 14 * i}" text-anchor="end" '
                    f'fill="{colour}">{escape(label)}</text>')
    return _frame(title, body)


def bar_chart(values: Mapping[str, float], title: str = "RMSE") -> str:
    labels = list(values)
    heights = [float(values[k]) for k in labels]
    top = max(heights + [1e-12])
    sy = _scale(0.0, top, HEIGHT - PAD, PAD)
    slot = (WIDTH - 2 * PAD) / max(len(labels), 1)
    body = [f'<line x1="{PAD}" y1="{HEIGHT - PAD}" x2="{WIDTH - PAD}" y2="{HEIGHT - PAD}" stroke="#888"/>']
    for i, (label, h) in enumerate(zip(labels, heights)):
        x = PAD + i * slot + slot * 0.15
        y = sy(h)
        body.append(f'<rect x="{x:.2f}" y="{y:.2f}" width="{slot * 0.7:.2f}" '
                    f'height="{HEIGHT - PAD - y:.2f}" fill="{PALETTE[(i + 1) % len(PALETTE)]}"/>')
        body.append(f'<text x="{x + slot * 0.35:.2f}" y="{y - 4:.2f}" text-anchor="middle">{h:.3f}</text>')
        body.append(f'<text x="{x + slot * 0.35:.2f}" y="{HEIGHT - PAD + 14}" '
                    f'text-anchor="middle">{escape(label)}</text>')
    return _frame(title, body)
