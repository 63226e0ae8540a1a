"""Deterministic SVG rendering for proposal overlays and entropy histograms.

SVG keeps the toolkit free of raster-drawing dependencies and makes the
artifacts diffable in tests: identical inputs produce identical markup.
"""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .errors import ValidationError
from .geometry import BBox

__all__ = ["render_overlay", "render_histogram", "PROVENANCE_COLORS"]

PROVENANCE_COLORS = {
    "initial": "#1f77b4",
    "merged": "#ff7f0e",
    "refined": "#2ca02c",
    "ground_truth": "#d62728",
}
_FALLBACK_COLOR = "#7f7f7f"


def _fmt(value: float) -> str:
    return f"{value:.2f}".rstrip("0").rstrip(".")


def render_overlay(
    width: float,
    height: float,
    boxes: Sequence[tuple[BBox, str, str]],
    image_href: str | None = None,
) -> str:
    """An SVG sized like the image, with one labeled rect per (box, label,
    provenance) triple. ``image_href`` links the underlying raster instead
    of embedding it."""
    if width <= 0 or height <= 0:
        raise ValidationError(f"overlay size must be positive, got {width}x{height}")
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" '
        f'height="{_fmt(height)}" viewBox="0 0 {_fmt(width)} {_fmt(height)}">'
    ]
    if image_href:
        parts.append(
            f'<image href="{escape(image_href)}" x="0" y="0" '
            f'width="{_fmt(width)}" height="{_fmt(height)}"/>'
        )
    else:
        parts.append(
            f'<rect x="0" y="0" width="{_fmt(width)}" height="{_fmt(height)}" '
            f'fill="#ffffff"/>'
        )
    for box, label, provenance in boxes:
        color = PROVENANCE_COLORS.get(provenance, _FALLBACK_COLOR)
        parts.append(
            f'<rect x="{_fmt(box.x_min)}" y="{_fmt(box.y_min)}" '
            f'width="{_fmt(box.width)}" height="{_fmt(box.height)}" '
            f'fill="none" stroke="{color}" stroke-width="2"/>'
        )
        if label:
            text_y = box.y_min - 3 if box.y_min >= 12 else box.y_min + 12
            parts.append(
                f'<text x="{_fmt(box.x_min)}" y="{_fmt(text_y)}" '
                f'font-family="monospace" font-size="10" fill="{color}">'
                f"{escape(label)}</text>"
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def render_histogram(
    report: Mapping,
    width: int = 640,
    height: int = 360,
    series_colors: tuple[str, str] = ("#2ca02c", "#d62728"),
) -> str:
    """Bar chart of the correct/incorrect entropy histograms side by side.

    ``report`` is the mapping produced by the entropy analysis: its
    "histogram" entry holds bin edges and the two count arrays.
    """
    histogram = report.get("histogram")
    if not isinstance(histogram, Mapping):
        raise ValidationError('report lacks a "histogram" section')
    edges = histogram["bin_edges"]
    correct = histogram["correct"]
    incorrect = histogram["incorrect"]
    bins = len(edges) - 1
    if bins < 1 or len(correct) != bins or len(incorrect) != bins:
        raise ValidationError("histogram arrays are inconsistent")

    margin_left, margin_bottom, margin_top = 46, 32, 16
    plot_w = width - margin_left - 12
    plot_h = height - margin_top - margin_bottom
    peak = max(max(correct, default=0), max(incorrect, default=0), 1)
    bar_w = plot_w / bins / 2.0

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>',
    ]
    for series_index, (counts, color) in enumerate(
        zip((correct, incorrect), series_colors)
    ):
        for bin_index, count in enumerate(counts):
            if count <= 0:
                continue
            bar_h = plot_h * count / peak
            x = margin_left + (2 * bin_index + series_index) * bar_w
            y = margin_top + plot_h - bar_h
            parts.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(bar_w)}" '
                f'height="{_fmt(bar_h)}" fill="{color}"/>'
            )
    axis_y = margin_top + plot_h
    parts.append(
        f'<line x1="{margin_left}" y1="{axis_y}" x2="{margin_left + plot_w}" '
        f'y2="{axis_y}" stroke="#000000"/>'
    )
    parts.append(
        f'<line x1="{margin_left}" y1="{margin_top}" x2="{margin_left}" '
        f'y2="{axis_y}" stroke="#000000"/>'
    )
    parts.append(
        f'<text x="{margin_left}" y="{height - 8}" font-family="monospace" '
        f'font-size="11">entropy 0 .. {_fmt(float(edges[-1]))} nats</text>'
    )
    parts.append(
        f'<text x="8" y="{margin_top + 10}" font-family="monospace" '
        f'font-size="11">n={_fmt(float(peak))}</text>'
    )
    legend = [
        ("correct", series_colors[0], report.get("mean_correct")),
        ("incorrect", series_colors[1], report.get("mean_incorrect")),
    ]
    for index, (name, color, mean) in enumerate(legend):
        y = margin_top + 14 * (index + 1) + 10
        mean_text = "none" if mean is None else f"{mean:.3f}"
        parts.append(
            f'<rect x="{margin_left + plot_w - 170}" y="{y - 9}" width="10" '
            f'height="10" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{margin_left + plot_w - 154}" y="{y}" '
            f'font-family="monospace" font-size="11">{name} mean={mean_text}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
