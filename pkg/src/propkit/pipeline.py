"""End-to-end orchestration: configuration, staged runs, and artifacts.

The pipeline walks its stages in a fixed order (initial proposals,
selection, merging, refinement, evaluation), processing images through a
worker pool and reducing results in sorted image-id order so reruns with
the same configuration and seed are byte-identical.
"""

from __future__ import annotations

import dataclasses
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from ._version import __version__
from .embeddings import CategoryVocabulary
from .errors import ConfigError, FormatError, StageError, ToolkitError
from .evaluation import (
    DEFAULT_BUDGETS,
    GroundTruth,
    MetricReport,
    compute_report,
    load_ground_truth,
)
from .geometry import BBox
from .images import ImageRef, discover_images, load_image
from .initial import (
    DEFAULT_BUDGET,
    InitialProposal,
    generate_builtin,
    read_proposal_file,
    select_for_image,
    write_proposal_file,
)
from .merging import MergeConfig, merge_image
from .providers import EmbeddingProvider, SerializedProvider, build_provider
from .regression import (
    RegressorParams,
    TrainConfig,
    build_training_pairs,
    load_params,
    mine_pseudo_labels,
    refine_image,
    save_params,
    train,
    write_loss_history,
)
from .selection import (
    ScoredProposal,
    ScoringContext,
    SelectionConfig,
    analyze_entropies,
    build_scored,
    filter_by_entropy,
    objectness_scores,
    write_scored_file,
)
from .svg import render_histogram, render_overlay

__all__ = [
    "StageToggles",
    "PipelineConfig",
    "RunResult",
    "TrainResult",
    "AblationRow",
    "load_config",
    "run",
    "train_regressor",
    "ablate",
    "analyze",
]


@dataclass(frozen=True)
class StageToggles:
    """Which optional stages participate; order constraints are validated."""

    selection: bool = True
    merging: bool = True
    regression: bool = False


@dataclass
class PipelineConfig:
    images_dir: Path
    vocabulary_path: Path
    provider_spec: dict
    output_dir: Path
    proposals_path: Path | None = None
    ground_truth_path: Path | None = None
    regressor_params_path: Path | None = None
    budget: int = DEFAULT_BUDGET
    selection: SelectionConfig = field(default_factory=SelectionConfig)
    merging: MergeConfig = field(default_factory=MergeConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    stages: StageToggles = field(default_factory=StageToggles)
    seed: int = 0
    workers: int = 1
    top_k: int = 100
    overlays: bool = False
    eval_budgets: tuple[int, ...] = DEFAULT_BUDGETS
    nms_threshold: float = 0.5
    base_dir: Path = Path(".")

    def validate(self, for_run: bool = True) -> None:
        """Structural checks; raises ConfigError with the offending field."""
        if self.budget < 1:
            raise ConfigError(f"budget must be >= 1, got {self.budget}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.top_k < 1:
            raise ConfigError(f"top_k must be >= 1, got {self.top_k}")
        if not 0.0 < self.nms_threshold < 1.0:
            raise ConfigError(f"nms_threshold must lie in (0, 1), got {self.nms_threshold}")
        if self.stages.merging and not self.stages.selection:
            raise ConfigError("the merging stage requires the selection stage")
        if self.stages.regression and not self.stages.selection:
            raise ConfigError("the regression stage requires the selection stage")
        if for_run and self.stages.regression and self.regressor_params_path is None:
            raise ConfigError(
                "the regression stage needs regressor_params (train one first)"
            )
        if not self.images_dir.is_dir():
            raise ConfigError(f"images_dir does not exist: {self.images_dir}")
        if not self.vocabulary_path.is_file():
            raise ConfigError(f"vocabulary file does not exist: {self.vocabulary_path}")
        for name, path in (
            ("proposals", self.proposals_path),
            ("ground_truth", self.ground_truth_path),
            ("regressor_params", self.regressor_params_path),
        ):
            if path is not None and not path.is_file():
                raise ConfigError(f"{name} file does not exist: {path}")

    def snapshot(self) -> dict:
        """JSON-serializable view of the configuration."""
        def convert(value):
            if isinstance(value, Path):
                return str(value)
            if dataclasses.is_dataclass(value) and not isinstance(value, type):
                return {
                    f.name: convert(getattr(value, f.name))
                    for f in dataclasses.fields(value)
                }
            if isinstance(value, tuple):
                return [convert(v) for v in value]
            if isinstance(value, dict):
                return {k: convert(v) for k, v in value.items()}
            return value

        return {
            f.name: convert(getattr(self, f.name)) for f in dataclasses.fields(self)
        }


_CONFIG_KEYS = {
    "images_dir", "vocabulary", "provider", "output_dir", "proposals",
    "ground_truth", "regressor_params", "budget", "selection", "merging",
    "training", "stages", "seed", "workers", "top_k", "overlays",
    "eval_budgets", "nms_threshold",
}


def _sub_config(cls, data: Mapping, section: str):
    if not isinstance(data, Mapping):
        raise ConfigError(f'section "{section}" must be an object')
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f'unknown keys in "{section}": {sorted(unknown)}')
    coerced = dict(data)
    for key in ("hidden", "jitter_scale"):
        if key in coerced and isinstance(coerced[key], list):
            coerced[key] = tuple(coerced[key])
    try:
        return cls(**coerced)
    except (ToolkitError, TypeError, ValueError) as exc:
        raise ConfigError(f'invalid "{section}" section: {exc}') from exc


def load_config(path: str | Path, overrides: Mapping | None = None) -> PipelineConfig:
    """Read a JSON config file; ``overrides`` wins over file values.

    Relative paths are resolved against the config file's directory.
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file does not exist: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    merged = dict(data)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key.startswith("stages."):
            merged.setdefault("stages", {})
            if not isinstance(merged["stages"], dict):
                raise ConfigError('"stages" must be an object')
            merged["stages"] = dict(merged["stages"])
            merged["stages"][key.split(".", 1)[1]] = value
        else:
            merged[key] = value

    base = path.parent

    def resolve(value, name: str, required: bool = False) -> Path | None:
        if value is None:
            if required:
                raise ConfigError(f'config needs "{name}"')
            return None
        if not isinstance(value, str):
            raise ConfigError(f'"{name}" must be a path string')
        p = Path(value)
        return p if p.is_absolute() else base / p

    provider_spec = merged.get("provider")
    if not isinstance(provider_spec, dict) or "backend" not in provider_spec:
        raise ConfigError('config needs a "provider" object with a "backend"')

    try:
        config = PipelineConfig(
            images_dir=resolve(merged.get("images_dir"), "images_dir", required=True),
            vocabulary_path=resolve(merged.get("vocabulary"), "vocabulary", required=True),
            provider_spec=dict(provider_spec),
            output_dir=resolve(merged.get("output_dir", "out"), "output_dir"),
            proposals_path=resolve(merged.get("proposals"), "proposals"),
            ground_truth_path=resolve(merged.get("ground_truth"), "ground_truth"),
            regressor_params_path=resolve(merged.get("regressor_params"), "regressor_params"),
            budget=int(merged.get("budget", DEFAULT_BUDGET)),
            selection=_sub_config(SelectionConfig, merged.get("selection", {}), "selection"),
            merging=_sub_config(MergeConfig, merged.get("merging", {}), "merging"),
            training=_sub_config(TrainConfig, merged.get("training", {}), "training"),
            stages=_sub_config(StageToggles, merged.get("stages", {}), "stages"),
            seed=int(merged.get("seed", 0)),
            workers=int(merged.get("workers", 1)),
            top_k=int(merged.get("top_k", 100)),
            overlays=bool(merged.get("overlays", False)),
            eval_budgets=tuple(int(b) for b in merged.get("eval_budgets", DEFAULT_BUDGETS)),
            nms_threshold=float(merged.get("nms_threshold", 0.5)),
            base_dir=base,
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config value: {exc}") from exc
    return config


# --- workspace ------------------------------------------------------------


@dataclass
class _Workspace:
    config: PipelineConfig
    vocab: CategoryVocabulary
    provider: EmbeddingProvider
    text_vectors: tuple
    images: dict[str, ImageRef]
    image_paths: dict[str, Path]

    @property
    def image_ids(self) -> list[str]:
        return sorted(self.images)


def _build_workspace(config: PipelineConfig) -> _Workspace:
    vocab = CategoryVocabulary.from_file(config.vocabulary_path)
    try:
        provider = build_provider(config.provider_spec, base_dir=config.base_dir)
    except ToolkitError as exc:
        raise ConfigError(f"cannot build embedding provider: {exc}") from exc
    if not provider.thread_safe and config.workers > 1:
        provider = SerializedProvider(provider)
    backend = config.provider_spec.get("backend")
    needs_pixels = backend in ("synthetic", "onnx") or config.proposals_path is None

    paths = discover_images(config.images_dir)
    if not paths:
        raise ConfigError(f"no images found under {config.images_dir}")
    images: dict[str, ImageRef] = {}
    image_paths: dict[str, Path] = {}
    for p in paths:
        ref = load_image(p, with_pixels=needs_pixels)
        if ref.image_id in images:
            raise ConfigError(f"duplicate image id {ref.image_id!r} under {config.images_dir}")
        images[ref.image_id] = ref
        image_paths[ref.image_id] = p
    text_vectors = tuple(provider.embed_texts(vocab))
    return _Workspace(config, vocab, provider, text_vectors, images, image_paths)


def _map_images(
    stage: str,
    image_ids: Sequence[str],
    func: Callable[[str], object],
    workers: int,
) -> dict[str, object]:
    """Run a per-image function across the pool, wrapping failures."""

    def guarded(image_id: str):
        try:
            return func(image_id)
        except (FormatError, ConfigError):
            raise
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, str(exc), image_id=image_id) from exc

    results: dict[str, object] = {}
    if workers <= 1 or len(image_ids) <= 1:
        for image_id in image_ids:
            results[image_id] = guarded(image_id)
        return results
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = {image_id: pool.submit(guarded, image_id) for image_id in image_ids}
        for image_id in image_ids:
            results[image_id] = futures[image_id].result()
    return results


# --- stages ---------------------------------------------------------------


def _stage_initial(ws: _Workspace) -> dict[str, list[InitialProposal]]:
    config = ws.config
    if config.proposals_path is not None:
        grouped = read_proposal_file(config.proposals_path)

        def one(image_id: str) -> list[InitialProposal]:
            ref = ws.images[image_id]
            return select_for_image(
                grouped, image_id, image_size=(ref.width, ref.height), budget=config.budget
            )

    else:

        def one(image_id: str) -> list[InitialProposal]:
            return generate_builtin(ws.images[image_id], config.budget)

    return _map_images("initial", ws.image_ids, one, config.workers)


def _stage_selection(
    ws: _Workspace, initial: Mapping[str, list[InitialProposal]]
) -> tuple[dict[str, list[ScoredProposal]], dict[str, ScoringContext]]:
    config = ws.config

    def one(image_id: str):
        proposals = initial[image_id]
        if not proposals:
            return [], None
        ref = ws.images[image_id]
        embeddings = [ws.provider.embed_region(ref, p.box) for p in proposals]
        scored = build_scored(proposals, embeddings, ws.text_vectors, config.selection)
        retained = filter_by_entropy(scored, config.selection.retain_fraction)
        ranked = objectness_scores(retained, ws.vocab.size, config.selection)
        context = ScoringContext.from_retained(
            ranked,
            lambda box: ws.provider.embed_region(ref, box),
            ws.text_vectors,
            config.selection,
        )
        return ranked, context

    results = _map_images("selection", ws.image_ids, one, config.workers)
    ranked = {image_id: results[image_id][0] for image_id in results}
    contexts = {
        image_id: results[image_id][1]
        for image_id in results
        if results[image_id][1] is not None
    }
    return ranked, contexts


def _stage_merging(
    ws: _Workspace,
    selected: Mapping[str, list[ScoredProposal]],
    contexts: Mapping[str, ScoringContext],
) -> tuple[dict[str, list[ScoredProposal]], dict[str, int]]:
    config = ws.config

    def one(image_id: str):
        proposals = selected[image_id]
        if not proposals:
            return [], 0
        combined, merged = merge_image(proposals, contexts[image_id], config.merging)
        return combined, len(merged)

    results = _map_images("merging", ws.image_ids, one, config.workers)
    combined = {image_id: results[image_id][0] for image_id in results}
    merged_counts = {image_id: results[image_id][1] for image_id in results}
    return combined, merged_counts


def _stage_refinement(
    ws: _Workspace,
    current: Mapping[str, list[ScoredProposal]],
    contexts: Mapping[str, ScoringContext],
    params: RegressorParams,
) -> dict[str, list[ScoredProposal]]:
    config = ws.config

    def one(image_id: str) -> list[ScoredProposal]:
        proposals = current[image_id]
        if not proposals:
            return []
        ref = ws.images[image_id]
        image_embedding = ws.provider.embed_image(ref)
        refined = refine_image(
            proposals, params, image_embedding, (ref.width, ref.height), contexts[image_id]
        )
        order = sorted(
            range(len(refined)),
            key=lambda i: (-refined[i].objectness, refined[i].entropy, i),
        )
        return [refined[i] for i in order]

    return _map_images("refinement", ws.image_ids, one, config.workers)


def _ranked_boxes(
    scored: Mapping[str, list[ScoredProposal]] | None,
    initial: Mapping[str, list[InitialProposal]],
) -> dict[str, list[tuple[BBox, float]]]:
    """Per-image (box, ranking score) pairs from whichever stage is latest."""
    if scored is None:
        return {
            image_id: [(p.box, p.initial_score) for p in proposals]
            for image_id, proposals in initial.items()
        }
    return {
        image_id: [
            (p.box, p.objectness if p.objectness is not None else p.initial_score)
            for p in proposals
        ]
        for image_id, proposals in scored.items()
    }


def _detections(
    ws: _Workspace, scored: Mapping[str, list[ScoredProposal]]
) -> dict[str, list[tuple[BBox, float, str]]]:
    names = ws.vocab.names
    out: dict[str, list[tuple[BBox, float, str]]] = {}
    for image_id, proposals in scored.items():
        out[image_id] = [
            (
                p.box,
                p.objectness if p.objectness is not None else p.initial_score,
                names[p.similarity.argmax_category],
            )
            for p in proposals
        ]
    return out


def _evaluate(
    ws: _Workspace,
    scored: Mapping[str, list[ScoredProposal]] | None,
    initial: Mapping[str, list[InitialProposal]],
    gt: GroundTruth,
) -> MetricReport:
    detections = _detections(ws, scored) if scored is not None else None
    return compute_report(
        _ranked_boxes(scored, initial),
        gt,
        budgets=ws.config.eval_budgets,
        detections_by_image=detections,
        nms_threshold=ws.config.nms_threshold,
    )


# --- artifact emission ----------------------------------------------------


def _write_json(path: Path, payload: dict, created: list[Path]) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)
    created.append(path)


def _emit_overlays(
    ws: _Workspace,
    scored: Mapping[str, list[ScoredProposal]] | None,
    initial: Mapping[str, list[InitialProposal]],
    out_dir: Path,
    created: list[Path],
) -> None:
    overlay_dir = out_dir / "overlays"
    overlay_dir.mkdir(parents=True, exist_ok=True)
    for image_id in ws.image_ids:
        ref = ws.images[image_id]
        boxes: list[tuple[BBox, str, str]] = []
        if scored is not None:
            for p in scored.get(image_id, [])[: ws.config.top_k]:
                label = (
                    f"{ws.vocab.names[p.similarity.argmax_category]} "
                    f"S={p.objectness:.3f}" if p.objectness is not None else ""
                )
                boxes.append((p.box, label, p.provenance))
        else:
            for p in initial.get(image_id, [])[: ws.config.top_k]:
                boxes.append((p.box, f"SL={p.initial_score:.3f}", "initial"))
        href = os.path.relpath(ws.image_paths[image_id], overlay_dir)
        target = overlay_dir / f"{image_id}.svg"
        target.write_text(
            render_overlay(ref.width, ref.height, boxes, image_href=href),
            encoding="utf-8",
        )
        created.append(target)


# --- public entry points --------------------------------------------------


@dataclass
class RunResult:
    proposals_path: Path
    manifest_path: Path
    metrics_path: Path | None
    report: MetricReport | None
    scored_by_image: dict[str, list[ScoredProposal]] | None
    initial_by_image: dict[str, list[InitialProposal]]
    timings: list[tuple[str, float]]


def run(config: PipelineConfig) -> RunResult:
    """Execute the configured stages and emit artifacts into output_dir.

    A stage failure removes files already written for this run before the
    error propagates.
    """
    config.validate(for_run=True)
    created: list[Path] = []
    try:
        return _run_inner(config, created)
    except BaseException:
        for path in created:
            try:
                path.unlink()
            except OSError:
                pass
        raise


def _run_inner(config: PipelineConfig, created: list[Path]) -> RunResult:
    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    timings: list[tuple[str, float]] = []

    start = time.perf_counter()
    ws = _build_workspace(config)
    timings.append(("setup", time.perf_counter() - start))

    start = time.perf_counter()
    initial = _stage_initial(ws)
    timings.append(("initial", time.perf_counter() - start))

    scored: dict[str, list[ScoredProposal]] | None = None
    contexts: dict[str, ScoringContext] = {}
    merged_counts: dict[str, int] = {}
    if config.stages.selection:
        start = time.perf_counter()
        scored, contexts = _stage_selection(ws, initial)
        timings.append(("selection", time.perf_counter() - start))
    if config.stages.merging:
        start = time.perf_counter()
        scored, merged_counts = _stage_merging(ws, scored, contexts)
        timings.append(("merging", time.perf_counter() - start))
    if config.stages.regression:
        start = time.perf_counter()
        params = load_params(config.regressor_params_path)
        if params.input_dim != 2 * ws.provider.dim + 4:
            raise ConfigError(
                f"regressor expects feature dimension {params.input_dim}, "
                f"but the provider yields {2 * ws.provider.dim + 4}"
            )
        scored = _stage_refinement(ws, scored, contexts, params)
        timings.append(("refinement", time.perf_counter() - start))

    report = None
    metrics_path = None
    if config.ground_truth_path is not None:
        start = time.perf_counter()
        gt = load_ground_truth(config.ground_truth_path)
        report = _evaluate(ws, scored, initial, gt)
        timings.append(("evaluation", time.perf_counter() - start))

    proposals_path = out_dir / "proposals.jsonl"
    if scored is not None:
        write_scored_file(proposals_path, scored)
    else:
        write_proposal_file(proposals_path, initial)
    created.append(proposals_path)

    if report is not None:
        metrics_path = out_dir / "metrics.json"
        _write_json(metrics_path, report.as_dict(), created)
        table_path = out_dir / "metrics.txt"
        table_path.write_text(report.render_table(), encoding="utf-8")
        created.append(table_path)

    if config.overlays:
        _emit_overlays(ws, scored, initial, out_dir, created)

    counts = {}
    for image_id in ws.image_ids:
        entry = {"initial": len(initial.get(image_id, []))}
        if scored is not None:
            entry["final"] = len(scored.get(image_id, []))
        if merged_counts:
            entry["merged"] = merged_counts.get(image_id, 0)
        counts[image_id] = entry
    manifest_path = out_dir / "manifest.json"
    _write_json(
        manifest_path,
        {
            "toolkit_version": __version__,
            "config": config.snapshot(),
            "stages": [{"name": name, "seconds": seconds} for name, seconds in timings],
            "images": len(ws.images),
            "per_image_counts": counts,
        },
        created,
    )
    return RunResult(
        proposals_path=proposals_path,
        manifest_path=manifest_path,
        metrics_path=metrics_path,
        report=report,
        scored_by_image=scored,
        initial_by_image=initial,
        timings=timings,
    )


@dataclass
class TrainResult:
    params_path: Path
    history_path: Path
    num_labels: int
    num_pairs: int
    history: list[float]


def train_regressor(config: PipelineConfig) -> TrainResult:
    """Mine pseudo labels from a full selection(+merging) pass and train."""
    config.validate(for_run=False)
    if not config.stages.selection:
        raise ConfigError("training requires the selection stage")
    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    ws = _build_workspace(config)
    initial = _stage_initial(ws)
    scored, contexts = _stage_selection(ws, initial)
    if config.stages.merging:
        scored, _ = _stage_merging(ws, scored, contexts)

    labels = mine_pseudo_labels(
        scored, p_entropy=config.training.p_entropy, p_score=config.training.p_score
    )
    if not labels:
        raise StageError(
            "train-regressor",
            "the low-entropy and high-initial-score percentiles do not overlap; "
            "no pseudo labels to train on",
        )
    image_sizes = {
        image_id: (ref.width, ref.height) for image_id, ref in ws.images.items()
    }
    pairs = build_training_pairs(
        labels,
        lambda image_id, box: ws.provider.embed_region(ws.images[image_id], box),
        lambda image_id: ws.provider.embed_image(ws.images[image_id]),
        image_sizes,
        config.training,
    )
    try:
        params, history = train(pairs, config.training, input_dim=2 * ws.provider.dim + 4)
    except ToolkitError as exc:
        raise StageError("train-regressor", str(exc)) from exc

    params_path = out_dir / "regressor.pcrg"
    save_params(params_path, params)
    history_path = out_dir / "loss_history.csv"
    write_loss_history(history_path, history)
    return TrainResult(
        params_path=params_path,
        history_path=history_path,
        num_labels=len(labels),
        num_pairs=len(pairs),
        history=history,
    )


@dataclass
class AblationRow:
    label: str
    report: MetricReport
    seconds_per_image: float


def ablate(config: PipelineConfig) -> tuple[list[AblationRow], Path, Path]:
    """Evaluate after each cumulative stage prefix; emit JSON and a table."""
    config.validate(for_run=config.stages.regression)
    if config.ground_truth_path is None:
        raise ConfigError("ablation requires ground_truth")
    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    ws = _build_workspace(config)
    gt = load_ground_truth(config.ground_truth_path)
    num_images = len(ws.images)
    rows: list[AblationRow] = []
    elapsed = 0.0

    start = time.perf_counter()
    initial = _stage_initial(ws)
    elapsed += time.perf_counter() - start
    rows.append(
        AblationRow("initial", _evaluate(ws, None, initial, gt), elapsed / num_images)
    )

    scored: dict[str, list[ScoredProposal]] | None = None
    contexts: dict[str, ScoringContext] = {}
    if config.stages.selection:
        start = time.perf_counter()
        scored, contexts = _stage_selection(ws, initial)
        elapsed += time.perf_counter() - start
        rows.append(
            AblationRow(
                "+selection", _evaluate(ws, scored, initial, gt), elapsed / num_images
            )
        )
    if config.stages.merging:
        start = time.perf_counter()
        scored, _ = _stage_merging(ws, scored, contexts)
        elapsed += time.perf_counter() - start
        rows.append(
            AblationRow(
                "+merging", _evaluate(ws, scored, initial, gt), elapsed / num_images
            )
        )
    if config.stages.regression:
        start = time.perf_counter()
        params = load_params(config.regressor_params_path)
        scored = _stage_refinement(ws, scored, contexts, params)
        elapsed += time.perf_counter() - start
        rows.append(
            AblationRow(
                "+regression", _evaluate(ws, scored, initial, gt), elapsed / num_images
            )
        )

    created: list[Path] = []
    json_path = out_dir / "ablation.json"
    _write_json(
        json_path,
        {
            "rows": [
                {
                    "stage": row.label,
                    "seconds_per_image": row.seconds_per_image,
                    "metrics": row.report.as_dict(),
                }
                for row in rows
            ]
        },
        created,
    )
    table_path = out_dir / "ablation.txt"
    table_path.write_text(_ablation_table(rows, config.eval_budgets), encoding="utf-8")
    return rows, json_path, table_path


def _ablation_table(rows: Sequence[AblationRow], budgets: Sequence[int]) -> str:
    budgets = tuple(sorted({int(b) for b in budgets}))
    header = (
        ["stage"]
        + [f"R@{k}" for k in budgets]
        + [f"AR@{max(budgets)}", "s/img"]
    )
    body = []
    for row in rows:
        body.append(
            [row.label]
            + [f"{row.report.recall[k]:.4f}" for k in budgets]
            + [
                f"{row.report.average_recall[max(budgets)]:.4f}",
                f"{row.seconds_per_image:.4f}",
            ]
        )
    widths = [max(len(line[i]) for line in [header] + body) for i in range(len(header))]
    lines = [
        "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line))
        for line in [header] + body
    ]
    return "\n".join(lines) + "\n"


def analyze(config: PipelineConfig, emit_svg: bool = False) -> tuple[dict, Path]:
    """Entropy statistics of all scored initial proposals against GT."""
    config.validate(for_run=False)
    if config.ground_truth_path is None:
        raise ConfigError("entropy analysis requires ground_truth")
    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)

    ws = _build_workspace(config)
    gt = load_ground_truth(config.ground_truth_path)
    initial = _stage_initial(ws)

    def one(image_id: str) -> list[ScoredProposal]:
        proposals = initial[image_id]
        if not proposals:
            return []
        ref = ws.images[image_id]
        embeddings = [ws.provider.embed_region(ref, p.box) for p in proposals]
        return build_scored(proposals, embeddings, ws.text_vectors, config.selection)

    scored = _map_images("analysis", ws.image_ids, one, config.workers)
    report = analyze_entropies(scored, gt.boxes_by_image())
    report_path = out_dir / "entropy_report.json"
    _write_json(report_path, report, [])
    if emit_svg:
        svg_path = out_dir / "entropy_hist.svg"
        svg_path.write_text(render_histogram(report), encoding="utf-8")
    return report, report_path
