"""Embedding backends behind one uniform provider interface.

Three backends: a deterministic synthetic one for tests (dominant crop
color -> basis vector), a precomputed store keyed by (image, box) and
category, and an ONNX runner for exported image/text encoders.
"""

from __future__ import annotations

import hashlib
import json
import threading
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .embeddings import CategoryVocabulary, box_key, image_key, load_embedding_file, text_key
from .errors import BackendError, ConfigError, ValidationError
from .geometry import BBox
from .images import ImageRef

__all__ = [
    "EmbeddingProvider",
    "SyntheticColorProvider",
    "PrecomputedProvider",
    "OnnxEncoderProvider",
    "SerializedProvider",
    "DEFAULT_PALETTE",
    "build_provider",
]


class EmbeddingProvider(ABC):
    """Uniform interface to image-region and text embedding backends.

    Providers are deterministic: identical inputs must produce identical
    vectors. ``thread_safe`` declares whether concurrent calls are allowed;
    the pipeline serializes calls to exclusive providers.
    """

    dim: int
    supports_image: bool = True
    supports_text: bool = True
    thread_safe: bool = True

    @abstractmethod
    def embed_region(self, image: ImageRef, box: BBox) -> np.ndarray:
        """Embed the cropped region of ``image`` under ``box``."""

    @abstractmethod
    def embed_image(self, image: ImageRef) -> np.ndarray:
        """Embed the whole image."""

    @abstractmethod
    def embed_texts(self, vocab: CategoryVocabulary) -> list[np.ndarray]:
        """One vector per category, in vocabulary order, prompts applied."""


# Saturated colors the synthetic backend can recognize, in palette order.
DEFAULT_PALETTE: tuple[tuple[str, tuple[int, int, int]], ...] = (
    ("red", (220, 40, 40)),
    ("green", (40, 200, 40)),
    ("blue", (40, 40, 220)),
    ("yellow", (230, 220, 40)),
    ("magenta", (220, 40, 220)),
    ("cyan", (40, 220, 220)),
    ("orange", (240, 140, 30)),
    ("purple", (130, 40, 200)),
)


def _hashed_unit_vector(token: str, dim: int) -> np.ndarray:
    """Deterministic unit vector derived from a string, stable across runs."""
    digest = hashlib.sha256(token.encode("utf-8")).digest()
    seed = int.from_bytes(digest[:8], "little")
    rng = np.random.Generator(np.random.PCG64(seed))
    v = rng.standard_normal(dim)
    return (v / np.linalg.norm(v)).astype(np.float32)


class SyntheticColorProvider(EmbeddingProvider):
    """Deterministic test backend mapping colors and names to fixed vectors.

    Crops whose mean color sits within ``color_tolerance`` of a palette entry
    map to that entry's basis vector (plus an optional fixed per-entry noise
    component); anything else maps to a neutral vector equidistant from all
    basis directions, which yields a uniform similarity row over palette
    vocabularies. Category names matching palette entries map to the bare
    basis vectors; other names hash to fixed unit vectors.
    """

    def __init__(
        self,
        dim: int = 32,
        palette: Sequence[tuple[str, tuple[int, int, int]]] = DEFAULT_PALETTE,
        noise: float = 0.0,
        color_tolerance: float = 80.0,
    ):
        if dim < len(palette) + 1:
            raise ValidationError(
                f"dim {dim} too small for a {len(palette)}-color palette"
            )
        self.dim = int(dim)
        self.palette = tuple((name, tuple(rgb)) for name, rgb in palette)
        self.noise = float(noise)
        self.color_tolerance = float(color_tolerance)
        self._palette_rgb = np.array([rgb for _, rgb in self.palette], dtype=np.float64)
        self._names = {name: i for i, (name, _) in enumerate(self.palette)}
        # Neutral direction: equal dot product with every basis vector.
        self._neutral = (np.ones(self.dim) / np.sqrt(self.dim)).astype(np.float32)

    def _basis(self, index: int) -> np.ndarray:
        v = np.zeros(self.dim, dtype=np.float32)
        v[index] = 1.0
        if self.noise > 0.0:
            n = _hashed_unit_vector(f"palette-noise:{index}", self.dim)
            v = v + np.float32(self.noise) * n
            v = v / np.float32(np.linalg.norm(v))
        return v

    def _embed_mean_color(self, mean_rgb: np.ndarray) -> np.ndarray:
        dists = np.linalg.norm(self._palette_rgb - mean_rgb[None, :], axis=1)
        nearest = int(np.argmin(dists))
        if dists[nearest] <= self.color_tolerance:
            return self._basis(nearest)
        return self._neutral.copy()

    def embed_region(self, image: ImageRef, box: BBox) -> np.ndarray:
        crop = image.crop(box)
        return self._embed_mean_color(crop.reshape(-1, 3).mean(axis=0))

    def embed_image(self, image: ImageRef) -> np.ndarray:
        pixels = image.require_pixels()
        return self._embed_mean_color(pixels.reshape(-1, 3).mean(axis=0))

    def embed_texts(self, vocab: CategoryVocabulary) -> list[np.ndarray]:
        out = []
        for name in vocab.names:
            idx = self._names.get(name)
            if idx is not None:
                v = np.zeros(self.dim, dtype=np.float32)
                v[idx] = 1.0
                out.append(v)
            else:
                out.append(_hashed_unit_vector(f"txt:{name}", self.dim))
        return out


class PrecomputedProvider(EmbeddingProvider):
    """Serves vectors precomputed into a PCEB store; keys must exist."""

    def __init__(self, vectors: Mapping[str, np.ndarray], dim: int | None = None):
        self.vectors = dict(vectors)
        if dim is None:
            if not self.vectors:
                raise ValidationError("empty embedding store and no declared dimension")
            dim = int(next(iter(self.vectors.values())).shape[0])
        for key, vec in self.vectors.items():
            if vec.shape != (dim,):
                raise ValidationError(
                    f"vector {key!r} has shape {vec.shape}, expected ({dim},)"
                )
        self.dim = dim

    @classmethod
    def from_file(cls, path: str | Path) -> "PrecomputedProvider":
        meta, vectors = load_embedding_file(path)
        return cls(vectors, dim=meta["dim"])

    def _lookup(self, key: str) -> np.ndarray:
        vec = self.vectors.get(key)
        if vec is None:
            raise BackendError(f"embedding store has no entry for key {key!r}")
        return vec.copy()

    def embed_region(self, image: ImageRef, box: BBox) -> np.ndarray:
        return self._lookup(box_key(image.image_id, box))

    def embed_image(self, image: ImageRef) -> np.ndarray:
        return self._lookup(image_key(image.image_id))

    def embed_texts(self, vocab: CategoryVocabulary) -> list[np.ndarray]:
        return [self._lookup(text_key(name)) for name in vocab.names]


class OnnxEncoderProvider(EmbeddingProvider):
    """Runs exported image/text encoder graphs through onnxruntime.

    Expects a manifest JSON next to the models describing preprocessing:
    {"dim": D, "image_size": R, "mean": [r,g,b], "std": [r,g,b],
     "context_length": L, "tokenizer": "bytes"}. Regions are resized with
    bilinear interpolation to R x R without aspect preservation; text is
    tokenized to UTF-8 bytes (ids 1..256, zero padding) under the default
    tokenizer.
    """

    def __init__(
        self,
        image_model: str | Path,
        text_model: str | Path,
        manifest: str | Path,
    ):
        try:
            import onnxruntime  # noqa: F401
        except ImportError as exc:
            raise BackendError(
                "onnxruntime is not installed; install propkit[onnx] to use "
                "the ONNX backend"
            ) from exc
        self._ort = onnxruntime
        for p in (image_model, text_model, manifest):
            if not Path(p).is_file():
                raise BackendError(f"model file not found: {p}")
        try:
            spec = json.loads(Path(manifest).read_text(encoding="utf-8"))
            self.dim = int(spec["dim"])
            self.image_size = int(spec["image_size"])
            self.mean = np.asarray(spec.get("mean", [0.0, 0.0, 0.0]), dtype=np.float32)
            self.std = np.asarray(spec.get("std", [1.0, 1.0, 1.0]), dtype=np.float32)
            self.context_length = int(spec.get("context_length", 77))
            self.tokenizer = spec.get("tokenizer", "bytes")
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"invalid encoder manifest {manifest}: {exc}") from exc
        if self.tokenizer != "bytes":
            raise BackendError(f"unsupported tokenizer {self.tokenizer!r}")
        try:
            self._image_session = onnxruntime.InferenceSession(
                str(image_model), providers=["CPUExecutionProvider"]
            )
            self._text_session = onnxruntime.InferenceSession(
                str(text_model), providers=["CPUExecutionProvider"]
            )
        except Exception as exc:
            raise BackendError(f"failed to load ONNX encoders: {exc}") from exc
        self._lock = threading.Lock()

    def _preprocess(self, crop: np.ndarray) -> np.ndarray:
        from PIL import Image

        im = Image.fromarray(crop, mode="RGB").resize(
            (self.image_size, self.image_size), Image.BILINEAR
        )
        arr = np.asarray(im, dtype=np.float32) / 255.0
        arr = (arr - self.mean) / self.std
        return np.ascontiguousarray(arr.transpose(2, 0, 1)[None, ...])

    def _run(self, session, feed: dict) -> np.ndarray:
        try:
            with self._lock:
                (out,) = session.run(None, feed)
        except Exception as exc:
            raise BackendError(f"ONNX inference failed: {exc}") from exc
        vec = np.asarray(out, dtype=np.float32).reshape(-1)
        if vec.shape[0] != self.dim:
            raise BackendError(
                f"encoder returned dimension {vec.shape[0]}, manifest declares {self.dim}"
            )
        if not np.all(np.isfinite(vec)):
            raise BackendError("encoder returned non-finite values")
        return vec

    def _embed_pixels(self, crop: np.ndarray) -> np.ndarray:
        feed_name = self._image_session.get_inputs()[0].name
        return self._run(self._image_session, {feed_name: self._preprocess(crop)})

    def embed_region(self, image: ImageRef, box: BBox) -> np.ndarray:
        return self._embed_pixels(image.crop(box))

    def embed_image(self, image: ImageRef) -> np.ndarray:
        return self._embed_pixels(image.require_pixels())

    def _tokenize(self, prompt: str) -> np.ndarray:
        ids = np.zeros(self.context_length, dtype=np.int64)
        raw = prompt.encode("utf-8")[: self.context_length]
        ids[: len(raw)] = np.frombuffer(raw, dtype=np.uint8).astype(np.int64) + 1
        return ids[None, :]

    def embed_texts(self, vocab: CategoryVocabulary) -> list[np.ndarray]:
        feed_name = self._text_session.get_inputs()[0].name
        return [
            self._run(self._text_session, {feed_name: self._tokenize(prompt)})
            for prompt in vocab.prompts()
        ]


class SerializedProvider(EmbeddingProvider):
    """Wrap a non-thread-safe provider with a lock so workers can share it."""

    def __init__(self, inner: EmbeddingProvider):
        self.inner = inner
        self.dim = inner.dim
        self.supports_image = inner.supports_image
        self.supports_text = inner.supports_text
        self.thread_safe = True
        self._lock = threading.Lock()

    def embed_region(self, image: ImageRef, box: BBox) -> np.ndarray:
        with self._lock:
            return self.inner.embed_region(image, box)

    def embed_image(self, image: ImageRef) -> np.ndarray:
        with self._lock:
            return self.inner.embed_image(image)

    def embed_texts(self, vocab: CategoryVocabulary) -> list[np.ndarray]:
        with self._lock:
            return self.inner.embed_texts(vocab)


def build_provider(spec: Mapping, base_dir: Path | None = None) -> EmbeddingProvider:
    """Construct a provider from a config mapping ({"backend": ..., ...})."""
    import os

    kind = spec.get("backend")
    base = Path(base_dir) if base_dir is not None else Path(".")

    def resolve(p: str) -> Path:
        path = Path(p)
        if not path.is_absolute():
            model_dir = os.environ.get("PROPKIT_MODEL_DIR")
            if model_dir and (Path(model_dir) / path).exists():
                return Path(model_dir) / path
            path = base / path
        return path

    if kind == "synthetic":
        return SyntheticColorProvider(
            dim=int(spec.get("dim", 32)),
            noise=float(spec.get("noise", 0.0)),
            color_tolerance=float(spec.get("color_tolerance", 80.0)),
        )
    if kind == "precomputed":
        if "path" not in spec:
            raise ConfigError('precomputed backend needs a "path"')
        return PrecomputedProvider.from_file(resolve(spec["path"]))
    if kind == "onnx":
        for key in ("image_model", "text_model", "manifest"):
            if key not in spec:
                raise ConfigError(f'onnx backend needs "{key}"')
        provider = OnnxEncoderProvider(
            resolve(spec["image_model"]),
            resolve(spec["text_model"]),
            resolve(spec["manifest"]),
        )
        return provider
    raise ConfigError(f"unknown embedding backend {kind!r}")
