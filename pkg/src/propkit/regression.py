"""Pseudo-label mining and the coordinate-refinement regressor.

The regressor is a small MLP (two hidden layers with batch normalization
and ReLU, sigmoid output head) trained with Smooth L1 loss on pseudo
labels: proposals that are simultaneously in the lowest-entropy and
highest-initial-score percentiles of the training pool. Forward, backward,
and the optimizer are implemented directly on NumPy arrays so training is
bit-reproducible from a seed.
"""

from __future__ import annotations

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import FormatError, ToolkitError, ValidationError
from .geometry import BBox, NormalizedBBox, clamp_box, denormalize, iou, normalize
from .selection import ScoredProposal, ScoringContext

__all__ = [
    "PseudoLabel",
    "RegressorParams",
    "TrainConfig",
    "TrainingPair",
    "mine_pseudo_labels",
    "build_feature",
    "build_training_pairs",
    "init_params",
    "forward",
    "smooth_l1",
    "batch_loss_and_grads",
    "train",
    "apply_replacement",
    "refine_image",
    "save_params",
    "load_params",
    "write_loss_history",
]

logger = logging.getLogger(__name__)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8
OUTPUT_DIM = 4


@dataclass(frozen=True)
class PseudoLabel:
    """A mined regression target with the statistics that qualified it."""

    image_id: str
    box: BBox
    entropy: float
    initial_score: float


@dataclass(frozen=True)
class TrainConfig:
    """Training hyperparameters; defaults give the reference recipe."""

    epochs: int = 30
    learning_rate: float = 1e-5
    batch_size: int = 64
    hidden: tuple[int, int] = (512, 256)
    optimizer: str = "adam"
    seed: int = 0
    jitters_per_label: int = 8
    jitter_shift: float = 0.1
    jitter_scale: tuple[float, float] = (0.8, 1.25)
    p_entropy: float = 0.01
    p_score: float = 0.05

    def __post_init__(self):
        if self.epochs < 1:
            raise ValidationError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate < 0.0:
            raise ValidationError(f"learning rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ValidationError(f"batch size must be >= 2, got {self.batch_size}")
        if len(self.hidden) != 2 or any(h < 1 for h in self.hidden):
            raise ValidationError(f"hidden sizes must be two positive ints, got {self.hidden}")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if self.jitters_per_label < 0:
            raise ValidationError("jitters_per_label must be >= 0")
        if not 0.0 <= self.jitter_shift < 1.0:
            raise ValidationError("jitter_shift must lie in [0, 1)")
        lo, hi = self.jitter_scale
        if not 0.0 < lo <= hi:
            raise ValidationError(f"invalid jitter_scale interval {self.jitter_scale}")
        for name in ("p_entropy", "p_score"):
            value = getattr(self, name)
            if not 0.0 < value <= 1.0:
                raise ValidationError(f"{name} must lie in (0, 1], got {value}")


# Tensor names in serialization order.
_PARAM_FIELDS = (
    "w1", "b1", "gamma1", "beta1", "running_mean1", "running_var1",
    "w2", "b2", "gamma2", "beta2", "running_mean2", "running_var2",
    "w3", "b3",
)


@dataclass
class RegressorParams:
    """All weights and batch-norm statistics of the three-layer MLP.

    Weight matrices are (out, in); the forward map is x -> W @ x + b.
    """

    w1: np.ndarray
    b1: np.ndarray
    gamma1: np.ndarray
    beta1: np.ndarray
    running_mean1: np.ndarray
    running_var1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    gamma2: np.ndarray
    beta2: np.ndarray
    running_mean2: np.ndarray
    running_var2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray

    def __post_init__(self):
        for name in _PARAM_FIELDS:
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if not np.all(np.isfinite(arr)):
                raise ValidationError(f"parameter tensor {name!r} contains non-finite values")
            setattr(self, name, arr)
        h1, din = self.w1.shape
        h2 = self.w2.shape[0]
        expect = {
            "b1": (h1,), "gamma1": (h1,), "beta1": (h1,),
            "running_mean1": (h1,), "running_var1": (h1,),
            "w2": (h2, h1), "b2": (h2,), "gamma2": (h2,), "beta2": (h2,),
            "running_mean2": (h2,), "running_var2": (h2,),
            "w3": (OUTPUT_DIM, h2), "b3": (OUTPUT_DIM,),
        }
        for name, shape in expect.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise ValidationError(
                    f"parameter tensor {name!r} has shape {actual}, expected {shape}"
                )
        self.input_dim = din
        self.hidden = (h1, h2)

    def copy(self) -> "RegressorParams":
        return RegressorParams(*(getattr(self, n).copy() for n in _PARAM_FIELDS))


def init_params(
    input_dim: int, hidden: tuple[int, int] = (512, 256), seed: int = 0
) -> RegressorParams:
    """He-initialized weights, identity batch-norm, small output head."""
    if input_dim < 5:
        raise ValidationError(f"input dimension must be >= 5, got {input_dim}")
    h1, h2 = hidden
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(0,)))
    w1 = rng.standard_normal((h1, input_dim)) * math.sqrt(2.0 / input_dim)
    w2 = rng.standard_normal((h2, h1)) * math.sqrt(2.0 / h1)
    w3 = rng.standard_normal((OUTPUT_DIM, h2)) * 0.01
    return RegressorParams(
        w1=w1, b1=np.zeros(h1),
        gamma1=np.ones(h1), beta1=np.zeros(h1),
        running_mean1=np.zeros(h1), running_var1=np.ones(h1),
        w2=w2, b2=np.zeros(h2),
        gamma2=np.ones(h2), beta2=np.zeros(h2),
        running_mean2=np.zeros(h2), running_var2=np.ones(h2),
        w3=w3, b3=np.zeros(OUTPUT_DIM),
    )


def mine_pseudo_labels(
    scored_by_image: Mapping[str, Sequence[ScoredProposal]],
    p_entropy: float = 0.01,
    p_score: float = 0.05,
) -> list[PseudoLabel]:
    """Intersect the global low-entropy and high-initial-score percentiles.

    The pool spans all images; each cut keeps ceil(p * pool) proposals with
    ties broken by (image_id, box coordinates). An empty intersection is
    reported with a warning and yields no labels.
    """
    for name, value in (("p_entropy", p_entropy), ("p_score", p_score)):
        if not 0.0 < value <= 1.0:
            raise ValidationError(f"{name} must lie in (0, 1], got {value}")
    pool: list[tuple[str, ScoredProposal]] = []
    for image_id in sorted(scored_by_image):
        for proposal in scored_by_image[image_id]:
            pool.append((image_id, proposal))
    if not pool:
        raise ValidationError("pseudo-label mining needs a non-empty proposal pool")

    def tiebreak(index: int) -> tuple:
        image_id, proposal = pool[index]
        return (image_id, proposal.box.as_tuple())

    count_entropy = math.ceil(p_entropy * len(pool))
    count_score = math.ceil(p_score * len(pool))
    by_entropy = sorted(range(len(pool)), key=lambda i: (pool[i][1].entropy,) + tiebreak(i))
    by_score = sorted(range(len(pool)), key=lambda i: (-pool[i][1].initial_score,) + tiebreak(i))
    chosen = set(by_entropy[:count_entropy]) & set(by_score[:count_score])
    if not chosen:
        logger.warning(
            "pseudo-label mining found no overlap between the top %d low-entropy "
            "and top %d high-score proposals (pool %d); training will be skipped",
            count_entropy, count_score, len(pool),
        )
        return []
    labels = [
        PseudoLabel(
            image_id=pool[i][0],
            box=pool[i][1].box,
            entropy=pool[i][1].entropy,
            initial_score=pool[i][1].initial_score,
        )
        for i in sorted(chosen, key=tiebreak)
    ]
    return labels


def build_feature(
    region_embedding: np.ndarray,
    image_embedding: np.ndarray,
    coords: NormalizedBBox,
) -> np.ndarray:
    """Concatenate [region vector; image vector; 4 normalized coordinates]."""
    v = np.asarray(region_embedding, dtype=np.float64).reshape(-1)
    g = np.asarray(image_embedding, dtype=np.float64).reshape(-1)
    return np.concatenate([v, g, np.asarray(coords.as_tuple(), dtype=np.float64)])


@dataclass(frozen=True)
class TrainingPair:
    """One (feature vector, normalized target coords) regression example."""

    feature: np.ndarray
    target: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.target, dtype=np.float64)
        if t.shape != (OUTPUT_DIM,) or np.any(t < 0.0) or np.any(t > 1.0):
            raise ValidationError("target must be 4 normalized coordinates in [0, 1]")
        object.__setattr__(self, "target", t)
        object.__setattr__(
            self, "feature", np.asarray(self.feature, dtype=np.float64).reshape(-1)
        )


def build_training_pairs(
    labels: Sequence[PseudoLabel],
    embed_region: Callable[[str, BBox], np.ndarray],
    embed_image: Callable[[str], np.ndarray],
    image_sizes: Mapping[str, tuple[float, float]],
    config: TrainConfig,
) -> list[TrainingPair]:
    """Identity plus jittered inputs per label, all regressing to the label.

    Jitters shift the box by up to +-jitter_shift of its side and rescale it
    within jitter_scale, clamped to the image; jitters that collapse are
    skipped.
    """
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(1,)))
    pairs: list[TrainingPair] = []
    image_cache: dict[str, np.ndarray] = {}
    for label in labels:
        if label.image_id not in image_sizes:
            raise ValidationError(f"no image size declared for {label.image_id!r}")
        width, height = image_sizes[label.image_id]
        if label.image_id not in image_cache:
            image_cache[label.image_id] = np.asarray(
                embed_image(label.image_id), dtype=np.float64
            )
        image_vec = image_cache[label.image_id]
        target = np.asarray(normalize(label.box, width, height).as_tuple())

        candidates = [label.box]
        box_w, box_h = label.box.width, label.box.height
        cx = (label.box.x_min + label.box.x_max) / 2.0
        cy = (label.box.y_min + label.box.y_max) / 2.0
        for _ in range(config.jitters_per_label):
            dx = rng.uniform(-config.jitter_shift, config.jitter_shift) * box_w
            dy = rng.uniform(-config.jitter_shift, config.jitter_shift) * box_h
            scale = rng.uniform(config.jitter_scale[0], config.jitter_scale[1])
            half_w, half_h = box_w * scale / 2.0, box_h * scale / 2.0
            raw = (cx + dx - half_w, cy + dy - half_h, cx + dx + half_w, cy + dy + half_h)
            try:
                candidates.append(clamp_box(raw, width, height))
            except ValidationError:
                continue
        for box in candidates:
            vec = embed_region(label.image_id, box)
            feature = build_feature(vec, image_vec, normalize(box, width, height))
            pairs.append(TrainingPair(feature=feature, target=target))
    return pairs


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def forward(
    params: RegressorParams,
    region_embedding: np.ndarray,
    image_embedding: np.ndarray,
    coords: NormalizedBBox,
) -> NormalizedBBox:
    """Inference pass using running batch-norm statistics.

    The four sigmoid outputs are reordered so min < max on each axis; equal
    pairs mean the head is degenerate and are rejected.
    """
    x = build_feature(region_embedding, image_embedding, coords)
    if x.shape[0] != params.input_dim:
        raise ValidationError(
            f"feature dimension {x.shape[0]} does not match parameters "
            f"(expected {params.input_dim})"
        )
    z1 = params.w1 @ x + params.b1
    a1 = params.gamma1 * (z1 - params.running_mean1) / np.sqrt(
        params.running_var1 + BN_EPS
    ) + params.beta1
    h1 = np.maximum(a1, 0.0)
    z2 = params.w2 @ h1 + params.b2
    a2 = params.gamma2 * (z2 - params.running_mean2) / np.sqrt(
        params.running_var2 + BN_EPS
    ) + params.beta2
    h2 = np.maximum(a2, 0.0)
    p = _sigmoid(params.w3 @ h2 + params.b3)
    x_lo, x_hi = sorted((float(p[0]), float(p[2])))
    y_lo, y_hi = sorted((float(p[1]), float(p[3])))
    if x_lo == x_hi or y_lo == y_hi:
        raise ValidationError("regressor output is degenerate (zero-extent box)")
    return NormalizedBBox(x_lo, y_lo, x_hi, y_hi)


def smooth_l1(prediction: np.ndarray, target: np.ndarray) -> float:
    """Smooth L1 averaged over the four coordinates."""
    p = np.asarray(prediction, dtype=np.float64).reshape(-1)
    t = np.asarray(target, dtype=np.float64).reshape(-1)
    if p.shape != (OUTPUT_DIM,) or t.shape != (OUTPUT_DIM,):
        raise ValidationError("smooth_l1 expects two 4-vectors")
    d = np.abs(p - t)
    per_coord = np.where(d < 1.0, 0.5 * d * d, d - 0.5)
    return float(per_coord.mean())


def batch_loss_and_grads(
    params: RegressorParams, features: np.ndarray, targets: np.ndarray
) -> tuple[float, dict[str, np.ndarray], dict[str, np.ndarray]]:
    """Training-mode forward and full backward pass for one batch.

    Returns (loss, gradients keyed like the parameter fields, batch norm
    statistics for the running-average update). Gradients are exact; tests
    compare them against central finite differences.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0], OUTPUT_DIM):
        raise ValidationError(f"bad batch shapes {x.shape} / {y.shape}")
    batch = x.shape[0]
    if batch < 2:
        raise ValidationError("batch normalization needs batches of >= 2 samples")

    z1 = x @ params.w1.T + params.b1
    mu1 = z1.mean(axis=0)
    var1 = z1.var(axis=0)
    inv1 = 1.0 / np.sqrt(var1 + BN_EPS)
    x1h = (z1 - mu1) * inv1
    a1 = params.gamma1 * x1h + params.beta1
    h1 = np.maximum(a1, 0.0)

    z2 = h1 @ params.w2.T + params.b2
    mu2 = z2.mean(axis=0)
    var2 = z2.var(axis=0)
    inv2 = 1.0 / np.sqrt(var2 + BN_EPS)
    x2h = (z2 - mu2) * inv2
    a2 = params.gamma2 * x2h + params.beta2
    h2 = np.maximum(a2, 0.0)

    z3 = h2 @ params.w3.T + params.b3
    p = _sigmoid(z3)

    d = p - y
    absd = np.abs(d)
    loss = float(np.where(absd < 1.0, 0.5 * d * d, absd - 0.5).mean())

    dp = np.where(absd < 1.0, d, np.sign(d)) / (OUTPUT_DIM * batch)
    dz3 = dp * p * (1.0 - p)
    grads: dict[str, np.ndarray] = {}
    grads["w3"] = dz3.T @ h2
    grads["b3"] = dz3.sum(axis=0)

    dh2 = dz3 @ params.w3
    da2 = dh2 * (a2 > 0.0)
    grads["gamma2"] = (da2 * x2h).sum(axis=0)
    grads["beta2"] = da2.sum(axis=0)
    dx2h = da2 * params.gamma2
    dvar2 = (dx2h * (z2 - mu2)).sum(axis=0) * -0.5 * inv2**3
    dmu2 = -dx2h.sum(axis=0) * inv2 + dvar2 * (-2.0) * (z2 - mu2).mean(axis=0)
    dz2 = dx2h * inv2 + dvar2 * 2.0 * (z2 - mu2) / batch + dmu2 / batch
    grads["w2"] = dz2.T @ h1
    grads["b2"] = dz2.sum(axis=0)

    dh1 = dz2 @ params.w2
    da1 = dh1 * (a1 > 0.0)
    grads["gamma1"] = (da1 * x1h).sum(axis=0)
    grads["beta1"] = da1.sum(axis=0)
    dx1h = da1 * params.gamma1
    dvar1 = (dx1h * (z1 - mu1)).sum(axis=0) * -0.5 * inv1**3
    dmu1 = -dx1h.sum(axis=0) * inv1 + dvar1 * (-2.0) * (z1 - mu1).mean(axis=0)
    dz1 = dx1h * inv1 + dvar1 * 2.0 * (z1 - mu1) / batch + dmu1 / batch
    grads["w1"] = dz1.T @ x
    grads["b1"] = dz1.sum(axis=0)

    stats = {"mean1": mu1, "var1": var1, "mean2": mu2, "var2": var2}
    return loss, grads, stats


_TRAINABLE = ("w1", "b1", "gamma1", "beta1", "w2", "b2", "gamma2", "beta2", "w3", "b3")


def train(
    pairs: Sequence[TrainingPair], config: TrainConfig, input_dim: int | None = None
) -> tuple[RegressorParams, list[float]]:
    """Train the regressor; returns final parameters and per-epoch mean loss.

    The batch partition is drawn once from the seed and reused every epoch,
    so a zero learning rate yields a constant loss history. Single-sample
    trailing batches are dropped (batch norm needs >= 2).
    """
    if not pairs:
        raise ValidationError("training needs a non-empty pair set")
    features = np.stack([p.feature for p in pairs])
    targets = np.stack([p.target for p in pairs])
    if input_dim is None:
        input_dim = features.shape[1]
    if features.shape[1] != input_dim:
        raise ValidationError(
            f"features have dimension {features.shape[1]}, expected {input_dim}"
        )
    params = init_params(input_dim, config.hidden, config.seed)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=config.seed, spawn_key=(2,)))
    order = rng.permutation(len(pairs))
    batches = [
        order[start : start + config.batch_size]
        for start in range(0, len(pairs), config.batch_size)
    ]
    batches = [b for b in batches if b.shape[0] >= 2]
    if not batches:
        raise ValidationError(
            f"no usable batches: {len(pairs)} pairs at batch size {config.batch_size}"
        )

    adam_m = {n: np.zeros_like(getattr(params, n)) for n in _TRAINABLE}
    adam_v = {n: np.zeros_like(getattr(params, n)) for n in _TRAINABLE}
    step = 0
    history: list[float] = []
    for epoch in range(config.epochs):
        epoch_loss = 0.0
        epoch_count = 0
        for batch_index, batch in enumerate(batches):
            loss, grads, stats = batch_loss_and_grads(
                params, features[batch], targets[batch]
            )
            if not math.isfinite(loss):
                raise ToolkitError(
                    f"non-finite loss at epoch {epoch + 1}, batch {batch_index + 1}; "
                    f"learning rate {config.learning_rate} may be too high"
                )
            epoch_loss += loss * batch.shape[0]
            epoch_count += batch.shape[0]

            n = batch.shape[0]
            unbias = n / (n - 1)
            for layer in ("1", "2"):
                rmean = getattr(params, f"running_mean{layer}")
                rvar = getattr(params, f"running_var{layer}")
                rmean *= 1.0 - BN_MOMENTUM
                rmean += BN_MOMENTUM * stats[f"mean{layer}"]
                rvar *= 1.0 - BN_MOMENTUM
                rvar += BN_MOMENTUM * stats[f"var{layer}"] * unbias

            step += 1
            for name in _TRAINABLE:
                g = grads[name]
                theta = getattr(params, name)
                if config.optimizer == "adam":
                    adam_m[name] = ADAM_BETA1 * adam_m[name] + (1.0 - ADAM_BETA1) * g
                    adam_v[name] = ADAM_BETA2 * adam_v[name] + (1.0 - ADAM_BETA2) * g * g
                    m_hat = adam_m[name] / (1.0 - ADAM_BETA1**step)
                    v_hat = adam_v[name] / (1.0 - ADAM_BETA2**step)
                    theta -= config.learning_rate * m_hat / (np.sqrt(v_hat) + ADAM_EPS)
                else:
                    theta -= config.learning_rate * g
        history.append(epoch_loss / epoch_count)
    return params, history


def apply_replacement(
    original: ScoredProposal,
    refined: NormalizedBBox,
    image_size: tuple[float, float],
    context: ScoringContext,
) -> ScoredProposal:
    """Adopt the refined box only when it is strictly better and close.

    Replacement requires strictly lower entropy AND IoU with the original
    above 0.75; otherwise the original is returned untouched. Embedding
    failures keep the original and log a warning.
    """
    try:
        refined_box = denormalize(refined, image_size[0], image_size[1])
        candidate = context.score_box(refined_box, original.initial_score, "refined")
    except (ValidationError, ToolkitError) as exc:
        logger.warning("keeping original proposal; refinement failed: %s", exc)
        return original
    if candidate.entropy < original.entropy and iou(candidate.box, original.box) > 0.75:
        return candidate
    return original


def refine_image(
    proposals: Sequence[ScoredProposal],
    params: RegressorParams,
    image_embedding: np.ndarray,
    image_size: tuple[float, float],
    context: ScoringContext,
) -> list[ScoredProposal]:
    """Run the regressor over an image's proposals and apply the gate."""
    width, height = image_size
    out: list[ScoredProposal] = []
    for proposal in proposals:
        if proposal.embedding is None:
            out.append(proposal)
            continue
        try:
            coords = normalize(proposal.box, width, height)
            refined = forward(params, proposal.embedding, image_embedding, coords)
        except ValidationError as exc:
            logger.warning("keeping original proposal; regressor failed: %s", exc)
            out.append(proposal)
            continue
        out.append(apply_replacement(proposal, refined, image_size, context))
    return out


# --- parameter file (magic "PCRG") ---------------------------------------

_MAGIC = b"PCRG"
_VERSION = 1


def save_params(path: str | Path, params: RegressorParams) -> None:
    """Versioned little-endian dump: header, dimensions, float32 tensors."""
    h1, h2 = params.hidden
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<H", _VERSION)
    blob += struct.pack("<4I", params.input_dim, h1, h2, OUTPUT_DIM)
    for name in _PARAM_FIELDS:
        blob += np.ascontiguousarray(getattr(params, name), dtype="<f4").tobytes()
    Path(path).write_bytes(bytes(blob))


def _tensor_shapes(input_dim: int, h1: int, h2: int) -> list[tuple[str, tuple[int, ...]]]:
    return [
        ("w1", (h1, input_dim)), ("b1", (h1,)), ("gamma1", (h1,)), ("beta1", (h1,)),
        ("running_mean1", (h1,)), ("running_var1", (h1,)),
        ("w2", (h2, h1)), ("b2", (h2,)), ("gamma2", (h2,)), ("beta2", (h2,)),
        ("running_mean2", (h2,)), ("running_var2", (h2,)),
        ("w3", (OUTPUT_DIM, h2)), ("b3", (OUTPUT_DIM,)),
    ]


def load_params(path: str | Path) -> RegressorParams:
    """Read a parameter file, naming the byte offset of any corruption."""
    data = Path(path).read_bytes()
    if len(data) < 22:
        raise FormatError(
            f"file is {len(data)} bytes, shorter than the 22-byte header",
            location=str(path),
        )
    if data[:4] != _MAGIC:
        raise FormatError(
            f"bad magic {data[:4]!r}, expected {_MAGIC!r}", location="byte 0"
        )
    (version,) = struct.unpack_from("<H", data, 4)
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", location="byte 4")
    input_dim, h1, h2, out = struct.unpack_from("<4I", data, 6)
    if out != OUTPUT_DIM:
        raise FormatError(f"output dimension {out}, expected {OUTPUT_DIM}", location="byte 18")
    if input_dim < 5 or h1 < 1 or h2 < 1:
        raise FormatError(
            f"implausible dimensions ({input_dim}, {h1}, {h2}, {out})", location="byte 6"
        )
    offset = 22
    tensors: dict[str, np.ndarray] = {}
    for name, shape in _tensor_shapes(input_dim, h1, h2):
        nbytes = int(np.prod(shape)) * 4
        if offset + nbytes > len(data):
            raise FormatError(
                f"file truncated inside tensor {name!r}", location=f"byte {offset}"
            )
        flat = np.frombuffer(data, dtype="<f4", count=int(np.prod(shape)), offset=offset)
        tensors[name] = flat.reshape(shape).astype(np.float64)
        offset += nbytes
    if offset != len(data):
        raise FormatError(
            f"{len(data) - offset} trailing bytes after the last tensor",
            location=f"byte {offset}",
        )
    return RegressorParams(**tensors)


def write_loss_history(path: str | Path, history: Sequence[float]) -> None:
    """Loss curve as CSV with an epoch,mean_loss header."""
    lines = ["epoch,mean_loss"]
    for epoch, value in enumerate(history, start=1):
        lines.append(f"{epoch},{value!r}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
