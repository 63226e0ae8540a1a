"""Axis-aligned box arithmetic: IoU, envelope union, normalization and NMS.

Boxes are continuous corner coordinates (x_min, y_min, x_max, y_max) in the
image pixel frame. Areas are (x_max - x_min) * (y_max - y_min) with no +1
pixel convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from ._kernels import cross_iou, nms_keep
from .errors import ValidationError

__all__ = [
    "BBox",
    "NormalizedBBox",
    "iou",
    "pairwise_iou",
    "envelope",
    "nms",
    "normalize",
    "denormalize",
    "clamp_box",
    "boxes_to_array",
]


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box with strictly positive area and nonnegative corners."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise ValidationError(f"box coordinates must be finite, got {vals}")
        if min(vals) < 0:
            raise ValidationError(f"box coordinates must be >= 0, got {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValidationError(f"box must have positive area, got {vals}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)


@dataclass(frozen=True)
class NormalizedBBox:
    """Box with every coordinate divided by the image width/height, in [0, 1]."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) and 0.0 <= v <= 1.0 for v in vals):
            raise ValidationError(f"normalized coordinates must lie in [0, 1], got {vals}")
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValidationError(f"normalized box must have positive area, got {vals}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)


def iou(a: BBox, b: BBox) -> float:
    """Intersection over union of two boxes; symmetric, in [0, 1]."""
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    if ix <= 0:
        return 0.0
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def boxes_to_array(boxes: Iterable[BBox]) -> np.ndarray:
    """Stack boxes into a contiguous (N, 4) float64 array."""
    return np.array([b.as_tuple() for b in boxes], dtype=np.float64).reshape(-1, 4)


def pairwise_iou(a: Sequence[BBox] | np.ndarray, b: Sequence[BBox] | np.ndarray | None = None) -> np.ndarray:
    """(N, M) IoU matrix between two box collections (kernel-backed)."""
    arr_a = a if isinstance(a, np.ndarray) else boxes_to_array(a)
    if b is None:
        arr_b = arr_a
    else:
        arr_b = b if isinstance(b, np.ndarray) else boxes_to_array(b)
    return cross_iou(np.ascontiguousarray(arr_a, dtype=np.float64),
                     np.ascontiguousarray(arr_b, dtype=np.float64))


def envelope(boxes: Sequence[BBox]) -> BBox:
    """Smallest box containing every input box."""
    if len(boxes) == 0:
        raise ValidationError("envelope of an empty box list is undefined")
    return BBox(
        min(b.x_min for b in boxes),
        min(b.y_min for b in boxes),
        max(b.x_max for b in boxes),
        max(b.y_max for b in boxes),
    )


def nms(
    proposals: Sequence[tuple[BBox, float]],
    iou_threshold: float,
    max_keep: int = 0,
) -> list[tuple[BBox, float]]:
    """Greedy non-maximum suppression.

    Walks proposals by descending score (ties: smaller area first, then
    input order) and suppresses any box whose IoU with an already-kept box
    exceeds ``iou_threshold``. Output is in descending-score order.
    ``max_keep`` > 0 stops the walk once that many boxes are kept.
    """
    if not (0.0 < iou_threshold < 1.0):
        raise ValidationError(f"iou_threshold must lie in (0, 1), got {iou_threshold}")
    if len(proposals) == 0:
        return []
    arr = boxes_to_array([p[0] for p in proposals])
    order = sorted(
        range(len(proposals)),
        key=lambda i: (-proposals[i][1], proposals[i][0].area, i),
    )
    kept = nms_keep(
        arr, np.asarray(order, dtype=np.int64), float(iou_threshold), int(max_keep)
    )
    return [proposals[i] for i in kept]


def clamp_box(
    coords: BBox | Sequence[float], image_w: float, image_h: float
) -> BBox:
    """Clamp raw corner coordinates into [0, image_dim] and validate.

    Raises if the image dimensions are not positive or the clamped box is
    degenerate (the box lies entirely outside the image).
    """
    if not (image_w > 0 and image_h > 0):
        raise ValidationError(f"image dimensions must be positive, got {image_w}x{image_h}")
    if isinstance(coords, BBox):
        x0, y0, x1, y1 = coords.as_tuple()
    else:
        x0, y0, x1, y1 = (float(v) for v in coords)
    x0 = min(max(x0, 0.0), float(image_w))
    x1 = min(max(x1, 0.0), float(image_w))
    y0 = min(max(y0, 0.0), float(image_h))
    y1 = min(max(y1, 0.0), float(image_h))
    if not (x0 < x1 and y0 < y1):
        raise ValidationError(
            f"box {coords!r} is degenerate after clamping to {image_w}x{image_h}"
        )
    return BBox(x0, y0, x1, y1)


def normalize(
    box: BBox | Sequence[float], image_w: float, image_h: float
) -> NormalizedBBox:
    """Divide corner coordinates by the image size, clamping into the image first."""
    clamped = clamp_box(box, image_w, image_h)
    return NormalizedBBox(
        clamped.x_min / image_w,
        clamped.y_min / image_h,
        clamped.x_max / image_w,
        clamped.y_max / image_h,
    )


def denormalize(box: NormalizedBBox, image_w: float, image_h: float) -> BBox:
    """Inverse of :func:`normalize` for in-image boxes."""
    if not (image_w > 0 and image_h > 0):
        raise ValidationError(f"image dimensions must be positive, got {image_w}x{image_h}")
    return BBox(
        box.x_min * image_w,
        box.y_min * image_h,
        box.x_max * image_w,
        box.y_max * image_h,
    )
