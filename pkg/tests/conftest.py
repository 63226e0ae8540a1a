import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from propkit.geometry import BBox
from propkit.selection import ScoredProposal, SimilarityRow


def make_row(probabilities, max_cosine: float | None = None) -> SimilarityRow:
    p = np.asarray(probabilities, dtype=np.float64)
    p = p / p.sum()
    argmax = int(np.argmax(p))
    return SimilarityRow(
        probabilities=p,
        max_similarity=float(p[argmax]),
        argmax_category=argmax,
        max_cosine=float(p[argmax]) if max_cosine is None else float(max_cosine),
    )


def make_scored(
    box=(0.0, 0.0, 10.0, 10.0),
    initial_score: float = 1.0,
    probabilities=(0.7, 0.2, 0.1),
    provenance: str = "initial",
    embedding=None,
) -> ScoredProposal:
    row = make_row(probabilities)
    ent = float(-(row.probabilities[row.probabilities > 0] * np.log(row.probabilities[row.probabilities > 0])).sum())
    return ScoredProposal(
        box=BBox(*box),
        initial_score=initial_score,
        similarity=row,
        entropy=ent,
        provenance=provenance,
        embedding=None if embedding is None else np.asarray(embedding, dtype=np.float64),
    )


def one_hot_row(index: int, size: int) -> SimilarityRow:
    p = np.zeros(size)
    p[index] = 1.0
    return SimilarityRow(probabilities=p, max_similarity=1.0, argmax_category=index, max_cosine=1.0)


def uniform_row(size: int) -> SimilarityRow:
    p = np.full(size, 1.0 / size)
    return SimilarityRow(probabilities=p, max_similarity=1.0 / size, argmax_category=0, max_cosine=0.0)


def write_png(path: Path, pixels: np.ndarray) -> None:
    from PIL import Image

    Image.fromarray(pixels.astype(np.uint8), mode="RGB").save(path)


def solid_image(width: int, height: int, rgb=(128, 128, 128)) -> np.ndarray:
    out = np.empty((height, width, 3), dtype=np.uint8)
    out[:] = rgb
    return out


def paint_rect(pixels: np.ndarray, box, rgb) -> None:
    x0, y0, x1, y1 = (int(v) for v in box)
    pixels[y0:y1, x0:x1] = rgb


@pytest.fixture
def palette_dataset(tmp_path):
    """Six images with one colored rectangle each, plus vocab and JSONL GT.

    The synthetic color backend maps each rectangle to a one-hot category
    direction, so crops covering a rectangle get confident rows and
    background crops get neutral ones.
    """
    images_dir = tmp_path / "images"
    images_dir.mkdir()
    colors = {
        "red": (220, 40, 40),
        "green": (40, 200, 40),
        "blue": (40, 40, 220),
    }
    names = list(colors)
    gt_lines = []
    for i in range(6):
        name = names[i % 3]
        pixels = solid_image(96, 128)
        box = (20 + 4 * i, 30, 60 + 4 * i, 80)
        paint_rect(pixels, box, colors[name])
        write_png(images_dir / f"img{i:02d}.png", pixels)
        gt_lines.append(
            {
                "image_id": f"img{i:02d}",
                "x0": box[0],
                "y0": box[1],
                "x1": box[2],
                "y1": box[3],
                "category": name,
            }
        )
    gt_path = tmp_path / "gt.jsonl"
    gt_path.write_text("\n".join(json.dumps(r) for r in gt_lines) + "\n")
    vocab_path = tmp_path / "vocab.json"
    vocab_path.write_text(json.dumps({"names": names}))
    return {
        "root": tmp_path,
        "images_dir": images_dir,
        "gt_path": gt_path,
        "vocab_path": vocab_path,
        "names": names,
        "gt_lines": gt_lines,
    }


def write_config(path: Path, **overrides) -> Path:
    """Minimal pipeline config; keyword overrides replace top-level keys."""
    body = {
        "images_dir": "images",
        "vocabulary": "vocab.json",
        "provider": {"backend": "synthetic", "dim": 16},
        "output_dir": "out",
        "ground_truth": "gt.jsonl",
        "budget": 60,
        "seed": 0,
    }
    body.update(overrides)
    path.write_text(json.dumps(body, indent=1))
    return path


MAX_ENTROPY = {c: math.log(c) for c in (2, 3, 20, 80, 1600)}
