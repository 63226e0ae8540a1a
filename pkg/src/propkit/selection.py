"""Entropy-based proposal selection and combined objectness scoring.

Each proposal's region embedding is compared against every category text
embedding; the softmax-normalized similarity row yields a Shannon entropy.
Low-entropy proposals are retained (a fixed fraction per image) and
re-ranked by a combined score of normalized entropy, maximum similarity,
and the generator's initial score.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .embeddings import cosine_similarity, softmax
from .errors import FormatError, ValidationError
from .geometry import BBox, iou
from .initial import InitialProposal

__all__ = [
    "SimilarityRow",
    "ScoredProposal",
    "SelectionConfig",
    "PROVENANCE_TAGS",
    "similarity_row",
    "entropy",
    "filter_by_entropy",
    "entropy_normalizer",
    "combined_score",
    "objectness_scores",
    "ScoringContext",
    "build_scored",
    "analyze_entropies",
    "write_scored_file",
    "read_scored_file",
]

PROVENANCE_TAGS = ("initial", "merged", "refined")


@dataclass(frozen=True)
class SimilarityRow:
    """Softmax-normalized similarities of one region against all categories."""

    probabilities: np.ndarray
    max_similarity: float
    argmax_category: int
    max_cosine: float

    def __post_init__(self):
        p = np.asarray(self.probabilities, dtype=np.float64)
        if p.ndim != 1 or p.shape[0] < 2:
            raise ValidationError(f"similarity row needs >= 2 entries, got shape {p.shape}")
        if np.any(p < 0.0) or np.any(p > 1.0) or abs(float(p.sum()) - 1.0) > 1e-9:
            raise ValidationError("probabilities must lie in [0,1] and sum to 1")
        object.__setattr__(self, "probabilities", p)
        if abs(self.max_similarity - float(p.max())) > 1e-12:
            raise ValidationError("max_similarity does not match the row maximum")
        if not 0 <= self.argmax_category < p.shape[0]:
            raise ValidationError("argmax_category out of range")
        if p[self.argmax_category] != p.max():
            raise ValidationError("argmax_category does not index a maximal entry")

    @property
    def num_categories(self) -> int:
        return int(self.probabilities.shape[0])


@dataclass(frozen=True)
class ScoredProposal:
    """A proposal carrying its similarity row, entropy, and combined score.

    ``objectness`` stays None until re-ranking assigns it. ``embedding`` is
    the region vector the row was computed from; the merging stage needs it
    for pairwise feature similarity.
    """

    box: BBox
    initial_score: float
    similarity: SimilarityRow
    entropy: float
    provenance: str = "initial"
    objectness: float | None = None
    embedding: np.ndarray | None = None

    def __post_init__(self):
        if self.provenance not in PROVENANCE_TAGS:
            raise ValidationError(f"unknown provenance tag {self.provenance!r}")
        if not math.isfinite(self.initial_score) or self.initial_score < 0.0:
            raise ValidationError(f"initial score must be finite and >= 0, got {self.initial_score}")
        limit = math.log(self.similarity.num_categories)
        if not math.isfinite(self.entropy) or self.entropy < -1e-12 or self.entropy > limit + 1e-9:
            raise ValidationError(
                f"entropy {self.entropy} outside [0, ln C] for C={self.similarity.num_categories}"
            )
        if self.objectness is not None and not math.isfinite(self.objectness):
            raise ValidationError("objectness must be finite once assigned")

    def with_objectness(self, value: float) -> "ScoredProposal":
        return dataclasses.replace(self, objectness=float(value))


@dataclass(frozen=True)
class SelectionConfig:
    """Knobs for the selection stage.

    ``use_presoftmax_max`` switches the maximum-similarity term of the
    combined score from the post-softmax maximum (default) to the raw
    maximum cosine.
    """

    retain_fraction: float = 0.6
    lambda_sim: float = 0.06
    lambda_sl: float = 1.0
    temperature: float = 100.0
    use_presoftmax_max: bool = False

    def __post_init__(self):
        if not 0.0 < self.retain_fraction <= 1.0:
            raise ValidationError(
                f"retain_fraction must lie in (0, 1], got {self.retain_fraction}"
            )
        if self.lambda_sim < 0.0 or self.lambda_sl < 0.0:
            raise ValidationError("lambda_sim and lambda_sl must be >= 0")
        if not self.temperature > 0.0:
            raise ValidationError(f"temperature must be positive, got {self.temperature}")


def similarity_row(
    v: np.ndarray, text_vectors: Sequence[np.ndarray], temperature: float
) -> SimilarityRow:
    """Cosine similarities against all category vectors, softmax-normalized."""
    if len(text_vectors) < 2:
        raise ValidationError(f"need >= 2 category vectors, got {len(text_vectors)}")
    cosines = np.array([cosine_similarity(v, t) for t in text_vectors], dtype=np.float64)
    probabilities = softmax(cosines, temperature)
    argmax = int(np.argmax(probabilities))
    return SimilarityRow(
        probabilities=probabilities,
        max_similarity=float(probabilities[argmax]),
        argmax_category=argmax,
        max_cosine=float(cosines.max()),
    )


def entropy(row: SimilarityRow) -> float:
    """Shannon entropy of the row in nats, with 0 * ln 0 := 0."""
    p = row.probabilities
    nonzero = p[p > 0.0]
    return float(-(nonzero * np.log(nonzero)).sum())


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def retention_count(total: int, retain_fraction: float) -> int:
    """Number of proposals kept: round(fraction * total), at least 1."""
    return max(1, _round_half_up(retain_fraction * total))


def filter_by_entropy(
    proposals: Sequence[ScoredProposal], retain_fraction: float
) -> list[ScoredProposal]:
    """Keep the lowest-entropy fraction of an image's proposals.

    Ties break toward higher initial score, then input order; the result is
    sorted ascending by entropy.
    """
    if not proposals:
        raise ValidationError("filter_by_entropy needs a non-empty proposal list")
    if not 0.0 < retain_fraction <= 1.0:
        raise ValidationError(f"retain_fraction must lie in (0, 1], got {retain_fraction}")
    count = retention_count(len(proposals), retain_fraction)
    order = sorted(
        range(len(proposals)),
        key=lambda i: (proposals[i].entropy, -proposals[i].initial_score, i),
    )
    return [proposals[i] for i in order[:count]]


def entropy_normalizer(retained: Sequence[ScoredProposal]) -> float:
    """L2 norm of the retained set's entropies (the per-image normalizer)."""
    return math.sqrt(sum(p.entropy**2 for p in retained))


def combined_score(
    entropy_value: float,
    max_similarity: float,
    initial_score: float,
    retained_count: int,
    num_categories: int,
    normalizer: float,
    config: SelectionConfig,
) -> float:
    """Combined objectness: normalized-entropy, similarity, and SL terms.

    The entropy term is -(T/C) * E / ||E||_2 over the retained set; when the
    normalizer is zero every entropy is zero and the term vanishes.
    """
    if normalizer > 0.0:
        first = -(retained_count / num_categories) * entropy_value / normalizer
    else:
        first = 0.0
    return first + config.lambda_sim * max_similarity + config.lambda_sl * initial_score


def _max_similarity_term(proposal: ScoredProposal, config: SelectionConfig) -> float:
    if config.use_presoftmax_max:
        return proposal.similarity.max_cosine
    return proposal.similarity.max_similarity


def objectness_scores(
    retained: Sequence[ScoredProposal],
    num_categories: int,
    config: SelectionConfig,
) -> list[ScoredProposal]:
    """Assign combined scores to the retained set, sorted descending."""
    if not retained:
        raise ValidationError("objectness_scores needs a non-empty retained set")
    if num_categories < 2:
        raise ValidationError(f"need >= 2 categories, got {num_categories}")
    norm = entropy_normalizer(retained)
    count = len(retained)
    scored = [
        p.with_objectness(
            combined_score(
                p.entropy,
                _max_similarity_term(p, config),
                p.initial_score,
                count,
                num_categories,
                norm,
                config,
            )
        )
        for p in retained
    ]
    order = sorted(
        range(len(scored)),
        key=lambda i: (-scored[i].objectness, scored[i].entropy, i),
    )
    return [scored[i] for i in order]


@dataclass(frozen=True)
class ScoringContext:
    """Per-image re-scoring handle for boxes created after selection.

    Holds the retained-set statistics (count, entropy normalizer, maximum
    entropy) so that later stages score new boxes against the normalizer
    already fitted for the image instead of refitting it.
    """

    embed_region: Callable[[BBox], np.ndarray]
    text_vectors: tuple[np.ndarray, ...]
    config: SelectionConfig
    num_categories: int
    retained_count: int
    normalizer: float
    max_entropy: float

    @classmethod
    def from_retained(
        cls,
        retained: Sequence[ScoredProposal],
        embed_region: Callable[[BBox], np.ndarray],
        text_vectors: Sequence[np.ndarray],
        config: SelectionConfig,
    ) -> "ScoringContext":
        if not retained:
            raise ValidationError("scoring context needs a non-empty retained set")
        return cls(
            embed_region=embed_region,
            text_vectors=tuple(text_vectors),
            config=config,
            num_categories=len(text_vectors),
            retained_count=len(retained),
            normalizer=entropy_normalizer(retained),
            max_entropy=max(p.entropy for p in retained),
        )

    def score_box(
        self, box: BBox, initial_score: float, provenance: str
    ) -> ScoredProposal:
        """Embed a new box and score it under the image's fitted normalizer."""
        vec = np.asarray(self.embed_region(box), dtype=np.float64)
        row = similarity_row(vec, self.text_vectors, self.config.temperature)
        entropy_value = entropy(row)
        score = combined_score(
            entropy_value,
            row.max_cosine if self.config.use_presoftmax_max else row.max_similarity,
            initial_score,
            self.retained_count,
            self.num_categories,
            self.normalizer,
            self.config,
        )
        return ScoredProposal(
            box=box,
            initial_score=initial_score,
            similarity=row,
            entropy=entropy_value,
            provenance=provenance,
            objectness=score,
            embedding=vec,
        )


def build_scored(
    proposals: Sequence[InitialProposal],
    region_embeddings: Sequence[np.ndarray],
    text_vectors: Sequence[np.ndarray],
    config: SelectionConfig,
    provenance: str = "initial",
) -> list[ScoredProposal]:
    """Attach similarity rows and entropies to initial proposals."""
    if len(proposals) != len(region_embeddings):
        raise ValidationError(
            f"{len(proposals)} proposals but {len(region_embeddings)} embeddings"
        )
    out = []
    for prop, vec in zip(proposals, region_embeddings):
        row = similarity_row(vec, text_vectors, config.temperature)
        out.append(
            ScoredProposal(
                box=prop.box,
                initial_score=prop.initial_score,
                similarity=row,
                entropy=entropy(row),
                provenance=provenance,
                embedding=np.asarray(vec, dtype=np.float64),
            )
        )
    return out


def analyze_entropies(
    proposals_by_image: Mapping[str, Sequence[ScoredProposal]],
    ground_truth: Mapping[str, Sequence[BBox]],
    bins: int = 50,
    iou_threshold: float = 0.5,
) -> dict:
    """Entropy statistics split by proposal correctness.

    A proposal is correct when it reaches IoU >= ``iou_threshold`` with some
    ground-truth box of its image. Returns group means (None for an empty
    group) and fixed-width histograms over [0, ln C].
    """
    if bins < 1:
        raise ValidationError(f"bins must be >= 1, got {bins}")
    total_gt = sum(len(v) for v in ground_truth.values())
    if total_gt == 0:
        raise ValidationError("entropy analysis needs at least one ground-truth box")

    correct: list[float] = []
    incorrect: list[float] = []
    num_categories: int | None = None
    for image_id in sorted(proposals_by_image):
        gt_boxes = ground_truth.get(image_id, [])
        for proposal in proposals_by_image[image_id]:
            if num_categories is None:
                num_categories = proposal.similarity.num_categories
            hit = any(iou(proposal.box, g) >= iou_threshold for g in gt_boxes)
            (correct if hit else incorrect).append(proposal.entropy)
    if num_categories is None:
        raise ValidationError("entropy analysis needs at least one proposal")

    upper = math.log(num_categories)
    edges = np.linspace(0.0, upper, bins + 1)
    hist_correct, _ = np.histogram(np.asarray(correct), bins=edges)
    hist_incorrect, _ = np.histogram(np.asarray(incorrect), bins=edges)
    return {
        "num_categories": num_categories,
        "iou_threshold": iou_threshold,
        "count_correct": len(correct),
        "count_incorrect": len(incorrect),
        "mean_correct": float(np.mean(correct)) if correct else None,
        "mean_incorrect": float(np.mean(incorrect)) if incorrect else None,
        "histogram": {
            "bin_edges": [float(e) for e in edges],
            "correct": [int(c) for c in hist_correct],
            "incorrect": [int(c) for c in hist_incorrect],
        },
    }


def scored_to_record(image_id: str, proposal: ScoredProposal) -> dict:
    """JSON-lines record for a scored proposal (extended format)."""
    return {
        "image_id": image_id,
        "x0": proposal.box.x_min,
        "y0": proposal.box.y_min,
        "x1": proposal.box.x_max,
        "y1": proposal.box.y_max,
        "score": proposal.initial_score,
        "entropy": proposal.entropy,
        "objectness": proposal.objectness,
        "max_similarity": proposal.similarity.max_similarity,
        "argmax_category": proposal.similarity.argmax_category,
        "provenance": proposal.provenance,
    }


def write_scored_file(
    path: str | Path, proposals: Mapping[str, Iterable[ScoredProposal]]
) -> None:
    """Emit scored proposals as JSON-lines, images in sorted id order."""
    with open(path, "w", encoding="utf-8") as fh:
        for image_id in sorted(proposals):
            for proposal in proposals[image_id]:
                fh.write(json.dumps(scored_to_record(image_id, proposal)) + "\n")


_SCORED_NUMERIC = ("x0", "y0", "x1", "y1", "score", "entropy", "objectness", "max_similarity")


def read_scored_file(path: str | Path) -> dict[str, list[dict]]:
    """Parse a scored-proposal JSON-lines file into records grouped by image."""
    grouped: dict[str, list[dict]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(
                    f"invalid JSON: {exc.msg}", location=f"line {line_no}"
                ) from exc
            if not isinstance(record, dict) or not isinstance(record.get("image_id"), str):
                raise FormatError(
                    'record must be an object with a string "image_id"',
                    location=f"line {line_no}",
                )
            for key in _SCORED_NUMERIC:
                value = record.get(key)
                if isinstance(value, bool) or not isinstance(value, (int, float)):
                    raise FormatError(
                        f"field {key!r} must be a number", location=f"line {line_no}"
                    )
            if record.get("provenance") not in PROVENANCE_TAGS:
                raise FormatError(
                    f"unknown provenance {record.get('provenance')!r}",
                    location=f"line {line_no}",
                )
            if not isinstance(record.get("argmax_category"), int) or isinstance(
                record.get("argmax_category"), bool
            ):
                raise FormatError(
                    '"argmax_category" must be an integer', location=f"line {line_no}"
                )
            if record["x1"] <= record["x0"] or record["y1"] <= record["y0"]:
                raise FormatError("box has non-positive extent", location=f"line {line_no}")
            grouped.setdefault(record["image_id"], []).append(record)
    return grouped
