"""Self-contained SVG emitters for the evaluation reports.

SVG is text, so identical reports produce byte-identical files; floats are
formatted with fixed precision and nothing depends on a raster backend.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .metrics import CalibrationReport

_W, _H = 480, 360
_ML, _MR, _MT, _MB = 56, 16, 28, 44  # margins
_PW, _PH = _W - _ML - _MR, _H - _MT - _MB

_SERIES_COLORS = {"correct": "#2e8b57", "incorrect": "#e07b39", "ood": "#3b6fb6"}
_PALETTE = [
    "#3b6fb6", "#e07b39", "#2e8b57", "#c33c54", "#7b5ea7",
    "#8c6d31", "#d66ba0", "#5f5f5f", "#a2a925", "#3fa7a3",
]


def _f(x: float) -> str:
    return f"{x:.3f}"


def _header(title: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.0f}" y="18" font-family="sans-serif" font-size="13" '
        f'text-anchor="middle">{title}</text>',
    ]


def _axes(xlabel: str, ylabel: str) -> list[str]:
    x0, y0 = _ML, _MT + _PH
    parts = [
        f'<line x1="{x0}" y1="{y0}" x2="{x0 + _PW}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{_MT}" stroke="black"/>',
        f'<text x="{x0 + _PW / 2:.0f}" y="{_H - 8}" font-family="sans-serif" '
        f'font-size="11" text-anchor="middle">{xlabel}</text>',
        f'<text x="14" y="{_MT + _PH / 2:.0f}" font-family="sans-serif" font-size="11" '
        f'text-anchor="middle" transform="rotate(-90 14 {_MT + _PH / 2:.0f})">{ylabel}</text>',
    ]
    for frac in (0.0, 0.5, 1.0):
        px = x0 + frac * _PW
        py = y0 - frac * _PH
        parts.append(
            f'<text x="{px:.0f}" y="{y0 + 14}" font-family="sans-serif" font-size="9" '
            f'text-anchor="middle">{_f(frac)}</text>'
        )
        parts.append(
            f'<text x="{x0 - 6}" y="{py + 3:.0f}" font-family="sans-serif" font-size="9" '
            f'text-anchor="end">{_f(frac)}</text>'
        )
    return parts


def reliability_svg(report: CalibrationReport) -> str:
    """Per-bin accuracy bars against the identity diagonal."""
    if not report.bins:
        raise ValueError("empty report")
    x0, y0 = _ML, _MT + _PH
    parts = _header(f"Reliability diagram (ECE {report.ece:.4f})")
    parts += _axes("confidence", "accuracy")
    width = _PW / len(report.bins)
    for i, b in enumerate(report.bins):
        if b.count == 0:
            continue
        h = b.accuracy * _PH
        parts.append(
            f'<rect x="{x0 + i * width:.2f}" y="{y0 - h:.2f}" width="{width:.2f}" '
            f'height="{h:.2f}" fill="#3b6fb6" fill-opacity="0.7" stroke="black" '
            f'stroke-width="0.5"/>'
        )
    parts.append(
        f'<line x1="{x0}" y1="{y0}" x2="{x0 + _PW}" y2="{_MT}" stroke="#444" '
        f'stroke-dasharray="5,4"/>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def histogram_svg(report: CalibrationReport) -> str:
    """Overlaid per-bin confidence counts for correct / incorrect / OOD."""
    series = {
        "correct": report.hist_correct,
        "incorrect": report.hist_incorrect,
        "ood": report.hist_ood,
    }
    series = {k: v for k, v in series.items() if any(v)}
    if not series:
        raise ValueError("empty report")
    peak = max(max(v) for v in series.values())
    x0, y0 = _ML, _MT + _PH
    parts = _header("Confidence histogram")
    parts += _axes("confidence", "count")
    n_bins = len(report.bins)
    width = _PW / n_bins
    for name, counts in series.items():
        color = _SERIES_COLORS[name]
        for i, c in enumerate(counts):
            if c == 0:
                continue
            h = c / peak * _PH
            parts.append(
                f'<rect x="{x0 + i * width:.2f}" y="{y0 - h:.2f}" width="{width:.2f}" '
                f'height="{h:.2f}" fill="{color}" fill-opacity="0.45"/>'
            )
    legend_y = _MT + 6
    for j, name in enumerate(series):
        parts.append(
            f'<rect x="{x0 + 8}" y="{legend_y + 16 * j}" width="10" height="10" '
            f'fill="{_SERIES_COLORS[name]}" fill-opacity="0.45"/>'
        )
        parts.append(
            f'<text x="{x0 + 22}" y="{legend_y + 16 * j + 9}" font-family="sans-serif" '
            f'font-size="10">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def pca_scatter_svg(coords: np.ndarray, labels: np.ndarray, ratios: np.ndarray) -> str:
    """First two principal components, colored by label."""
    pts = np.asarray(coords, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] < 2 or len(pts) == 0:
        raise ValueError("empty report")
    labels = np.asarray(labels)
    x, y = pts[:, 0], pts[:, 1]
    span_x = max(x.max() - x.min(), 1e-12)
    span_y = max(y.max() - y.min(), 1e-12)
    x0, y0 = _ML, _MT + _PH
    parts = _header(
        f"Latent PCA (var {ratios[0]:.3f} / {ratios[1]:.3f})"
    )
    parts += [
        f'<line x1="{x0}" y1="{y0}" x2="{x0 + _PW}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{_MT}" stroke="black"/>',
        f'<text x="{x0 + _PW / 2:.0f}" y="{_H - 8}" font-family="sans-serif" '
        f'font-size="11" text-anchor="middle">component 1</text>',
        f'<text x="14" y="{_MT + _PH / 2:.0f}" font-family="sans-serif" font-size="11" '
        f'text-anchor="middle" transform="rotate(-90 14 {_MT + _PH / 2:.0f})">component 2</text>',
    ]
    for xi, yi, li in zip(x, y, labels):
        px = x0 + (xi - x.min()) / span_x * _PW
        py = y0 - (yi - y.min()) / span_y * _PH
        color = _PALETTE[int(li) % len(_PALETTE)] if li >= 0 else "#999999"
        parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.2" fill="{color}" fill-opacity="0.8"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plot(report, kind: str, path: str | Path) -> None:
    """Write one figure. kind selects: "reliability" | "histogram" | "pca".

    For "pca" pass a (coords, labels, ratios) tuple as the report.
    """
    if kind == "reliability":
        svg = reliability_svg(report)
    elif kind == "histogram":
        svg = histogram_svg(report)
    elif kind == "pca":
        coords, labels, ratios = report
        svg = pca_scatter_svg(coords, labels, ratios)
    else:
        raise ValueError(f"unknown plot kind {kind!r}")
    Path(path).write_text(svg)


__all__ = ["emit_plot", "histogram_svg", "pca_scatter_svg", "reliability_svg"]
