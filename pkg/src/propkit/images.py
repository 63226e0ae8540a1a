"""Raster image handles used across the pipeline.

An :class:`ImageRef` always knows its id and size; pixel data is optional so
precomputed-embedding runs can work from metadata alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .geometry import BBox, clamp_box

__all__ = ["ImageRef", "load_image", "discover_images"]

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".ppm")


@dataclass(frozen=True)
class ImageRef:
    """An image identity plus size, optionally with decoded RGB pixels."""

    image_id: str
    width: int
    height: int
    pixels: np.ndarray | None = None  # (H, W, 3) uint8 when present

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(
                f"image '{self.image_id}' has non-positive size {self.width}x{self.height}"
            )
        if self.pixels is not None:
            p = self.pixels
            if p.ndim != 3 or p.shape[2] != 3 or p.dtype != np.uint8:
                raise ValidationError(
                    f"pixels must be (H, W, 3) uint8, got {p.shape} {p.dtype}"
                )
            if p.shape[0] != self.height or p.shape[1] != self.width:
                raise ValidationError(
                    f"pixel array {p.shape[1]}x{p.shape[0]} does not match "
                    f"declared size {self.width}x{self.height}"
                )

    @classmethod
    def from_array(cls, image_id: str, pixels: np.ndarray) -> "ImageRef":
        pixels = np.ascontiguousarray(pixels, dtype=np.uint8)
        return cls(image_id, pixels.shape[1], pixels.shape[0], pixels)

    def require_pixels(self) -> np.ndarray:
        if self.pixels is None:
            raise ValidationError(f"image '{self.image_id}' has no pixel data loaded")
        return self.pixels

    def crop(self, box: BBox, min_side: float = 2.0) -> np.ndarray:
        """Integer pixel crop of the (clamped) box; partial pixels included.

        Rejects crops smaller than ``min_side`` pixels on either side.
        """
        pixels = self.require_pixels()
        clamped = clamp_box(box, self.width, self.height)
        if clamped.width < min_side or clamped.height < min_side:
            raise ValidationError(
                f"crop {clamped.as_tuple()} is below {min_side}px on a side"
            )
        x0 = int(math.floor(clamped.x_min))
        y0 = int(math.floor(clamped.y_min))
        x1 = min(int(math.ceil(clamped.x_max)), self.width)
        y1 = min(int(math.ceil(clamped.y_max)), self.height)
        return pixels[y0:y1, x0:x1]


def load_image(path: str | Path, with_pixels: bool = True) -> ImageRef:
    """Load an image file via Pillow; the id is the filename stem."""
    from PIL import Image

    path = Path(path)
    with Image.open(path) as im:
        if with_pixels:
            arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
            return ImageRef.from_array(path.stem, arr)
        return ImageRef(path.stem, im.width, im.height)


def discover_images(directory: str | Path) -> list[Path]:
    """Image files under a directory, sorted by name for deterministic runs."""
    directory = Path(directory)
    paths = [
        p for p in sorted(directory.iterdir())
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    ]
    return paths
