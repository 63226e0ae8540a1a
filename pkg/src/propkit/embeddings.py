"""Embedding-space primitives and the binary embedding store.

Holds the cosine/softmax math shared by the scoring stages, the category
vocabulary, and reader/writer for the PCEB key-value vector file used to
exchange precomputed embeddings with external tooling.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import FormatError, ValidationError
from .geometry import BBox

__all__ = [
    "MIN_NORM",
    "cosine_similarity",
    "softmax",
    "CategoryVocabulary",
    "image_key",
    "box_key",
    "text_key",
    "store_embedding_file",
    "load_embedding_file",
]

# Vectors with a smaller L2 norm are rejected as directionless.
MIN_NORM = 1e-12

PCEB_MAGIC = b"PCEB"
PCEB_VERSION = 1
_HEADER = struct.Struct("<4sHHI")  # magic, version, dim, count
_KEYLEN = struct.Struct("<H")


def _check_vector(v: np.ndarray, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise ValidationError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite entries")
    return arr


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine of the angle between two vectors, in [-1, 1]."""
    va = _check_vector(a, "a")
    vb = _check_vector(b, "b")
    if va.shape != vb.shape:
        raise ValidationError(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    na = np.linalg.norm(va)
    nb = np.linalg.norm(vb)
    if na <= MIN_NORM or nb <= MIN_NORM:
        raise ValidationError("cosine similarity of a (near-)zero vector is undefined")
    return float(np.clip(np.dot(va, vb) / (na * nb), -1.0, 1.0))


def softmax(logits: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Temperature-scaled softmax, stabilized by max subtraction.

    Computes exp(t * x_i) / sum_j exp(t * x_j); the result sums to 1 and is
    invariant under adding a constant to all logits.
    """
    if not temperature > 0:
        raise ValidationError(f"temperature must be positive, got {temperature}")
    z = _check_vector(logits, "logits") * float(temperature)
    z -= z.max()
    e = np.exp(z)
    return e / e.sum()


@dataclass(frozen=True)
class CategoryVocabulary:
    """Ordered candidate category names plus the text prompt template."""

    names: tuple[str, ...]
    prompt_template: str = "a photo of a {}"

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if len(self.names) < 2:
            raise ValidationError("vocabulary needs at least 2 categories")
        if len(set(self.names)) != len(self.names):
            dupes = sorted({n for n in self.names if self.names.count(n) > 1})
            raise ValidationError(f"duplicate category names: {dupes}")
        if any(not isinstance(n, str) or not n for n in self.names):
            raise ValidationError("category names must be non-empty strings")
        if self.prompt_template.count("{}") != 1:
            raise ValidationError(
                f"prompt template needs exactly one '{{}}' placeholder: {self.prompt_template!r}"
            )

    @property
    def size(self) -> int:
        return len(self.names)

    def prompts(self) -> list[str]:
        return [self.prompt_template.format(name) for name in self.names]

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise ValidationError(f"unknown category {name!r}") from None

    @classmethod
    def from_file(cls, path: str | Path, prompt_template: str | None = None) -> "CategoryVocabulary":
        """Load from a JSON object {"names": [...], "prompt_template": ...}
        or a plain text file with one category per line."""
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        if path.suffix.lower() == ".json":
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid vocabulary JSON: {exc}", str(path)) from exc
            if not isinstance(data, dict) or "names" not in data:
                raise FormatError('vocabulary JSON must be an object with "names"', str(path))
            template = prompt_template or data.get("prompt_template") or cls.prompt_template
            return cls(tuple(data["names"]), template)
        names = tuple(line.strip() for line in text.splitlines() if line.strip())
        return cls(names, prompt_template or cls.prompt_template)


def image_key(image_id: str) -> str:
    """Store key for a whole-image embedding."""
    return f"img:{image_id}"


def box_key(image_id: str, box: BBox) -> str:
    """Store key for a region embedding; coordinates printed with 2 decimals."""
    return (
        f"box:{image_id}:{box.x_min:.2f}:{box.y_min:.2f}"
        f":{box.x_max:.2f}:{box.y_max:.2f}"
    )


def text_key(category: str) -> str:
    """Store key for a category text embedding."""
    return f"txt:{category}"


def store_embedding_file(
    path: str | Path, vectors: Mapping[str, np.ndarray], dim: int | None = None
) -> None:
    """Write a key -> vector mapping as a PCEB file (little-endian binary).

    Layout: magic "PCEB", u16 version, u16 dim, u32 count, then per record
    [u16 key length, UTF-8 key bytes, dim float32 values]. Records are
    written in mapping iteration order so store/load round-trips are
    byte-exact.
    """
    items: list[tuple[bytes, np.ndarray]] = []
    for key, vec in vectors.items():
        arr = np.asarray(vec)
        if arr.ndim != 1:
            raise ValidationError(f"vector for key {key!r} must be 1-D")
        if not np.all(np.isfinite(arr)):
            raise ValidationError(f"vector for key {key!r} has non-finite entries")
        if dim is None:
            dim = int(arr.shape[0])
        elif arr.shape[0] != dim:
            raise ValidationError(
                f"vector for key {key!r} has dimension {arr.shape[0]}, expected {dim}"
            )
        kb = key.encode("utf-8")
        if len(kb) > 0xFFFF:
            raise ValidationError(f"key too long ({len(kb)} bytes): {key[:40]!r}...")
        items.append((kb, np.ascontiguousarray(arr, dtype="<f4")))
    if dim is None:
        dim = 0
    out = bytearray(_HEADER.pack(PCEB_MAGIC, PCEB_VERSION, dim, len(items)))
    for kb, arr in items:
        out += _KEYLEN.pack(len(kb))
        out += kb
        out += arr.tobytes()
    Path(path).write_bytes(bytes(out))


def load_embedding_file(
    path: str | Path, expected_dim: int | None = None
) -> tuple[dict, dict[str, np.ndarray]]:
    """Read a PCEB file; returns (metadata, key -> float32 vector map).

    Metadata carries version, dim and count. Structural problems raise a
    format error naming the byte offset where they were detected.
    """
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError("file shorter than the fixed header", f"byte {len(data)}")
    magic, version, dim, count = _HEADER.unpack_from(data, 0)
    if magic != PCEB_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {PCEB_MAGIC!r}", "byte 0")
    if version != PCEB_VERSION:
        raise FormatError(f"unsupported version {version}", "byte 4")
    if expected_dim is not None and dim != expected_dim:
        raise FormatError(f"dimension {dim} does not match expected {expected_dim}", "byte 6")
    offset = _HEADER.size
    rec_bytes = 4 * dim
    vectors: dict[str, np.ndarray] = {}
    for i in range(count):
        if offset + _KEYLEN.size > len(data):
            raise FormatError(f"truncated before key length of record {i}", f"byte {offset}")
        (klen,) = _KEYLEN.unpack_from(data, offset)
        offset += _KEYLEN.size
        if offset + klen > len(data):
            raise FormatError(f"truncated inside key of record {i}", f"byte {offset}")
        try:
            key = data[offset : offset + klen].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError(f"key of record {i} is not valid UTF-8", f"byte {offset}") from exc
        offset += klen
        if offset + rec_bytes > len(data):
            raise FormatError(f"truncated inside values of record {i}", f"byte {offset}")
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=offset).copy()
        offset += rec_bytes
        if key in vectors:
            raise FormatError(f"duplicate key {key!r} in record {i}", f"byte {offset}")
        vectors[key] = vec
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after last record", f"byte {offset}")
    meta = {"version": version, "dim": dim, "count": count}
    return meta, vectors
