"""Initial proposal acquisition: file ingestion and a built-in generator.

Proposals enter the toolkit either from a JSON-lines file produced by an
external generator or from the built-in gradient-based sliding-window
generator. Both paths emit at most ``budget`` boxes per image, sorted
descending by initial score.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from ._kernels import window_edge_scores
from .errors import FormatError, ValidationError
from .geometry import BBox, clamp_box, nms
from .images import ImageRef

__all__ = [
    "InitialProposal",
    "DEFAULT_BUDGET",
    "read_proposal_file",
    "load_proposals",
    "write_proposal_file",
    "generate_builtin",
]

# Per-image proposal budget.
DEFAULT_BUDGET = 300

# Built-in generator geometry: window sides as fractions of the shorter
# image side, width/height aspect ratios, and stride as a fraction of the
# window side.
GENERATOR_SCALES = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
GENERATOR_ASPECTS = (0.5, 1.0, 2.0)
GENERATOR_STRIDE_FRACTION = 0.125
DEDUP_IOU = 0.98
MIN_IMAGE_SIDE = 16


@dataclass(frozen=True)
class InitialProposal:
    """A candidate box with the generator's objectness score."""

    box: BBox
    initial_score: float

    def __post_init__(self):
        score = float(self.initial_score)
        if not math.isfinite(score) or score < 0.0:
            raise ValidationError(
                f"initial score must be finite and >= 0, got {self.initial_score!r}"
            )
        object.__setattr__(self, "initial_score", score)


_REQUIRED_FIELDS = ("image_id", "x0", "y0", "x1", "y1", "score")


def _parse_record(line: str, line_no: int) -> dict:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise FormatError(f"invalid JSON: {exc.msg}", location=f"line {line_no}") from exc
    if not isinstance(record, dict):
        raise FormatError("record is not an object", location=f"line {line_no}")
    for field_name in _REQUIRED_FIELDS:
        if field_name not in record:
            raise FormatError(
                f"missing field {field_name!r}", location=f"line {line_no}"
            )
    if not isinstance(record["image_id"], str):
        raise FormatError('"image_id" must be a string', location=f"line {line_no}")
    for field_name in _REQUIRED_FIELDS[1:]:
        value = record[field_name]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise FormatError(
                f"field {field_name!r} must be a number", location=f"line {line_no}"
            )
        if not math.isfinite(float(value)):
            raise FormatError(
                f"field {field_name!r} must be finite", location=f"line {line_no}"
            )
    if record["x1"] <= record["x0"] or record["y1"] <= record["y0"]:
        raise FormatError(
            "box has non-positive extent "
            f"({record['x0']}, {record['y0']}, {record['x1']}, {record['y1']})",
            location=f"line {line_no}",
        )
    if float(record["score"]) < 0.0:
        raise FormatError('"score" must be >= 0', location=f"line {line_no}")
    return record


def read_proposal_file(path: str | Path) -> dict[str, list[InitialProposal]]:
    """Parse a whole proposal JSON-lines file, grouped by image id.

    Boxes are validated but not clamped or truncated; use ``load_proposals``
    for the per-image contract.
    """
    grouped: dict[str, list[InitialProposal]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            record = _parse_record(line, line_no)
            box = BBox(
                max(0.0, float(record["x0"])),
                max(0.0, float(record["y0"])),
                float(record["x1"]),
                float(record["y1"]),
            )
            grouped.setdefault(record["image_id"], []).append(
                InitialProposal(box, float(record["score"]))
            )
    return grouped


def load_proposals(
    path: str | Path,
    image_id: str,
    image_size: tuple[float, float] | None = None,
    budget: int = DEFAULT_BUDGET,
) -> list[InitialProposal]:
    """Proposals for one image: clamped, sorted descending by score, truncated.

    An image absent from the file yields an empty list. ``image_size`` is
    (width, height); when given, boxes are clamped to it and boxes that
    collapse under clamping are rejected as a format error.
    """
    if budget < 1:
        raise ValidationError(f"budget must be >= 1, got {budget}")
    grouped = read_proposal_file(path)
    return select_for_image(grouped, image_id, image_size=image_size, budget=budget)


def select_for_image(
    grouped: Mapping[str, list[InitialProposal]],
    image_id: str,
    image_size: tuple[float, float] | None = None,
    budget: int = DEFAULT_BUDGET,
) -> list[InitialProposal]:
    """Per-image view over an already-parsed proposal table."""
    raw = grouped.get(image_id, [])
    out: list[InitialProposal] = []
    for prop in raw:
        box = prop.box
        if image_size is not None:
            try:
                box = clamp_box(box, image_size[0], image_size[1])
            except ValidationError as exc:
                raise FormatError(
                    f"box {prop.box.as_tuple()} collapses when clamped to "
                    f"{image_size[0]}x{image_size[1]}: {exc}",
                    location=f"image {image_id!r}",
                ) from exc
        out.append(InitialProposal(box, prop.initial_score))
    out.sort(key=lambda p: -p.initial_score)
    return out[:budget]


def write_proposal_file(
    path: str | Path, proposals: Mapping[str, Iterable[InitialProposal]]
) -> None:
    """Emit proposals as JSON-lines, images in sorted id order."""
    with open(path, "w", encoding="utf-8") as fh:
        for image_id in sorted(proposals):
            for prop in proposals[image_id]:
                record = {
                    "image_id": image_id,
                    "x0": prop.box.x_min,
                    "y0": prop.box.y_min,
                    "x1": prop.box.x_max,
                    "y1": prop.box.y_max,
                    "score": prop.initial_score,
                }
                fh.write(json.dumps(record) + "\n")


def _gradient_magnitude(pixels: np.ndarray) -> np.ndarray:
    """Sobel gradient magnitude of the luma channel."""
    gray = (
        0.299 * pixels[:, :, 0].astype(np.float64)
        + 0.587 * pixels[:, :, 1].astype(np.float64)
        + 0.114 * pixels[:, :, 2].astype(np.float64)
    )
    padded = np.pad(gray, 1, mode="edge")
    c = padded
    gx = (
        (c[:-2, 2:] + 2.0 * c[1:-1, 2:] + c[2:, 2:])
        - (c[:-2, :-2] + 2.0 * c[1:-1, :-2] + c[2:, :-2])
    )
    gy = (
        (c[2:, :-2] + 2.0 * c[2:, 1:-1] + c[2:, 2:])
        - (c[:-2, :-2] + 2.0 * c[:-2, 1:-1] + c[:-2, 2:])
    )
    return np.hypot(gx, gy)


def _enumerate_windows(width: int, height: int) -> np.ndarray:
    """Sliding-window grid over the scale/aspect pyramid, int64 (N, 4)."""
    base_side = min(width, height)
    rows: list[tuple[int, int, int, int]] = []
    for scale in GENERATOR_SCALES:
        side = scale * base_side
        for aspect in GENERATOR_ASPECTS:
            win_w = int(round(side * math.sqrt(aspect)))
            win_h = int(round(side / math.sqrt(aspect)))
            if win_w < 4 or win_h < 4 or win_w > width or win_h > height:
                continue
            step_x = max(1, int(round(win_w * GENERATOR_STRIDE_FRACTION)))
            step_y = max(1, int(round(win_h * GENERATOR_STRIDE_FRACTION)))
            xs = list(range(0, width - win_w + 1, step_x))
            ys = list(range(0, height - win_h + 1, step_y))
            # Always include the flush-right/bottom placement.
            if xs[-1] != width - win_w:
                xs.append(width - win_w)
            if ys[-1] != height - win_h:
                ys.append(height - win_h)
            for y in ys:
                for x in xs:
                    rows.append((x, y, x + win_w, y + win_h))
    return np.asarray(rows, dtype=np.int64).reshape(-1, 4)


def generate_builtin(image: ImageRef, budget: int = DEFAULT_BUDGET) -> list[InitialProposal]:
    """Gradient-based sliding-window proposal generator.

    Windows over a scale/aspect pyramid are scored by edge mass well inside
    the window minus edge mass near its border, normalized by the window
    perimeter, then deduplicated at IoU > 0.98 and truncated to ``budget``.
    Scores are clamped at zero so the output satisfies the initial-score
    invariant; a blank image scores 0 everywhere.
    """
    if budget < 1:
        raise ValidationError(f"budget must be >= 1, got {budget}")
    pixels = image.require_pixels()
    height, width = pixels.shape[:2]
    if width < MIN_IMAGE_SIDE or height < MIN_IMAGE_SIDE:
        raise ValidationError(
            f"image {image.image_id!r} is {width}x{height}; "
            f"the generator needs at least {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}"
        )
    magnitude = _gradient_magnitude(pixels)
    integral = np.zeros((height + 1, width + 1), dtype=np.float64)
    integral[1:, 1:] = magnitude.cumsum(axis=0).cumsum(axis=1)

    windows = _enumerate_windows(width, height)
    if windows.shape[0] == 0:
        return []
    # Border band scales with the window so large boxes are not penalized
    # for edges merely near, not at, their boundary.
    sides = np.minimum(windows[:, 2] - windows[:, 0], windows[:, 3] - windows[:, 1])
    scores = np.zeros(windows.shape[0], dtype=np.float64)
    for band in np.unique(np.maximum(1, sides // 16)):
        mask = np.maximum(1, sides // 16) == band
        scores[mask] = window_edge_scores(integral, windows[mask], int(band))
    scores = np.maximum(scores, 0.0)

    candidates = [
        (BBox(float(x0), float(y0), float(x1), float(y1)), float(s))
        for (x0, y0, x1, y1), s in zip(windows, scores)
    ]
    kept = nms(candidates, DEDUP_IOU, max_keep=budget)
    return [InitialProposal(box, score) for box, score in kept[:budget]]
