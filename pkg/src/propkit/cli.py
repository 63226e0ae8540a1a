"""Command-line interface: one tool, one subcommand per pipeline verb.

Exit codes: 0 success, 1 configuration error, 2 data-format error,
3 stage failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .embeddings import CategoryVocabulary
from .errors import BackendError, ConfigError, FormatError, StageError, ToolkitError
from .evaluation import compute_report, load_ground_truth
from .geometry import BBox
from .initial import read_proposal_file
from .pipeline import ablate, analyze, load_config, run, train_regressor
from .selection import read_scored_file

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_FORMAT = 2
EXIT_STAGE = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="JSON configuration file")
    parser.add_argument("--workers", type=int, default=None, help="worker threads")
    parser.add_argument("--seed", type=int, default=None, help="global random seed")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--top-k", type=int, default=None, dest="top_k",
                        help="boxes per image in overlays")
    parser.add_argument("--budget", type=int, default=None,
                        help="initial proposals per image")


def _add_toggles(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--selection", action=argparse.BooleanOptionalAction,
                        default=None, help="toggle the selection stage")
    parser.add_argument("--merging", action=argparse.BooleanOptionalAction,
                        default=None, help="toggle the merging stage")
    parser.add_argument("--regression", action=argparse.BooleanOptionalAction,
                        default=None, help="toggle the refinement stage")
    parser.add_argument("--overlays", action=argparse.BooleanOptionalAction,
                        default=None, help="emit per-image SVG overlays")
    parser.add_argument("--params", default=None,
                        help="regressor parameter file (PCRG)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="propkit",
        description="Open-category object proposal toolkit",
    )
    parser.add_argument("--verbose", action="store_true", help="info-level logging")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, text in (
        ("run", "execute the configured stages end to end"),
        ("generate", "built-in initial proposals only"),
        ("select", "initial proposals plus entropy-based selection"),
        ("merge", "selection plus graph-based merging"),
        ("refine", "selection, merging, and regressor refinement"),
    ):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        _add_toggles(p)

    p = sub.add_parser("train-regressor", help="mine pseudo labels and train")
    _add_common(p)
    _add_toggles(p)

    p = sub.add_parser("eval", help="score a proposal file against ground truth")
    _add_common(p)
    p.add_argument("--proposals-file", default=None,
                   help="proposal JSON-lines to evaluate (default: out/proposals.jsonl)")

    p = sub.add_parser("ablate", help="metrics after each cumulative stage")
    _add_common(p)
    _add_toggles(p)

    p = sub.add_parser("analyze-entropy", help="entropy statistics vs ground truth")
    _add_common(p)
    p.add_argument("--svg", action="store_true", help="also write a histogram SVG")

    return parser


_STAGE_PRESETS = {
    "generate": {"selection": False, "merging": False, "regression": False},
    "select": {"selection": True, "merging": False, "regression": False},
    "merge": {"selection": True, "merging": True, "regression": False},
    "refine": {"selection": True, "merging": True, "regression": True},
}


def _overrides_from(args: argparse.Namespace) -> dict:
    overrides: dict = {
        "workers": getattr(args, "workers", None),
        "seed": getattr(args, "seed", None),
        "top_k": getattr(args, "top_k", None),
        "budget": getattr(args, "budget", None),
    }
    out = getattr(args, "out", None)
    if out is not None:
        overrides["output_dir"] = str(Path(out).absolute())
    params = getattr(args, "params", None)
    if params is not None:
        overrides["regressor_params"] = str(Path(params).absolute())
    if getattr(args, "overlays", None) is not None:
        overrides["overlays"] = args.overlays
    for stage in ("selection", "merging", "regression"):
        value = getattr(args, stage, None)
        if value is not None:
            overrides[f"stages.{stage}"] = value
    preset = _STAGE_PRESETS.get(args.command)
    if preset:
        # explicit --[no-]stage flags beat the verb's preset
        for stage, value in preset.items():
            overrides.setdefault(f"stages.{stage}", value)
    return overrides


def _cmd_pipeline(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides_from(args))
    if args.command == "generate":
        config.proposals_path = None
    result = run(config)
    print(f"wrote {result.proposals_path} ({len(result.initial_by_image)} images)")
    if result.report is not None:
        print(f"wrote {result.metrics_path}")
        print(result.report.render_table(), end="")
    print(f"wrote {result.manifest_path}")
    return EXIT_OK


def _cmd_train(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides_from(args))
    result = train_regressor(config)
    print(
        f"trained on {result.num_labels} pseudo labels "
        f"({result.num_pairs} pairs, {len(result.history)} epochs)"
    )
    print(f"final epoch loss: {result.history[-1]:.6g}")
    print(f"wrote {result.params_path}")
    print(f"wrote {result.history_path}")
    return EXIT_OK


def _load_any_proposals(path: Path):
    """Read a scored or plain proposal file into ranking/detection inputs."""
    with open(path, "r", encoding="utf-8") as fh:
        first = ""
        for line in fh:
            if line.strip():
                first = line
                break
    scored_format = False
    if first:
        try:
            scored_format = "objectness" in json.loads(first)
        except json.JSONDecodeError:
            scored_format = False
    if scored_format:
        grouped = read_scored_file(path)
        ranked = {
            image_id: [
                (
                    BBox(r["x0"], r["y0"], r["x1"], r["y1"]),
                    float(r["objectness"]),
                )
                for r in records
            ]
            for image_id, records in grouped.items()
        }
        return ranked, grouped
    grouped = read_proposal_file(path)
    ranked = {
        image_id: [(p.box, p.initial_score) for p in proposals]
        for image_id, proposals in grouped.items()
    }
    return ranked, None


def _cmd_eval(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides_from(args))
    if config.ground_truth_path is None:
        raise ConfigError("eval requires ground_truth in the config")
    if not config.ground_truth_path.is_file():
        raise ConfigError(f"ground_truth file does not exist: {config.ground_truth_path}")
    proposals_file = (
        Path(args.proposals_file)
        if args.proposals_file is not None
        else config.output_dir / "proposals.jsonl"
    )
    if not proposals_file.is_file():
        raise ConfigError(f"proposal file does not exist: {proposals_file}")
    gt = load_ground_truth(config.ground_truth_path)
    ranked, scored_records = _load_any_proposals(proposals_file)
    detections = None
    if scored_records is not None:
        # Emitted argmax categories are vocabulary indices; resolve them to
        # names so AP lines up with the ground-truth categories.
        vocab = CategoryVocabulary.from_file(config.vocabulary_path)
        detections = {}
        for image_id, records in scored_records.items():
            rows = []
            for r in records:
                index = r["argmax_category"]
                if not 0 <= index < vocab.size:
                    raise FormatError(
                        f"argmax_category {index} outside the {vocab.size}-entry vocabulary",
                        location=f"image {image_id!r}",
                    )
                rows.append(
                    (
                        BBox(r["x0"], r["y0"], r["x1"], r["y1"]),
                        float(r["objectness"]),
                        vocab.names[index],
                    )
                )
            detections[image_id] = rows
    report = compute_report(
        ranked, gt, budgets=config.eval_budgets,
        detections_by_image=detections,
        nms_threshold=config.nms_threshold,
    )
    print(report.render_table(), end="")
    config.output_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = config.output_dir / "metrics.json"
    metrics_path.write_text(
        json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    print(f"wrote {metrics_path}")
    return EXIT_OK


def _cmd_ablate(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides_from(args))
    rows, json_path, table_path = ablate(config)
    print(table_path.read_text(encoding="utf-8"), end="")
    print(f"wrote {json_path}")
    print(f"wrote {table_path}")
    return EXIT_OK


def _cmd_analyze(args: argparse.Namespace) -> int:
    config = load_config(args.config, _overrides_from(args))
    report, report_path = analyze(config, emit_svg=args.svg)
    mean_c = report["mean_correct"]
    mean_i = report["mean_incorrect"]
    print(f"proposals: {report['count_correct']} correct, {report['count_incorrect']} incorrect")
    print(f"mean entropy (correct):   {'absent' if mean_c is None else f'{mean_c:.4f}'}")
    print(f"mean entropy (incorrect): {'absent' if mean_i is None else f'{mean_i:.4f}'}")
    print(f"wrote {report_path}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_pipeline,
    "generate": _cmd_pipeline,
    "select": _cmd_pipeline,
    "merge": _cmd_pipeline,
    "refine": _cmd_pipeline,
    "train-regressor": _cmd_train,
    "eval": _cmd_eval,
    "ablate": _cmd_ablate,
    "analyze-entropy": _cmd_analyze,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FormatError as exc:
        print(f"data-format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except StageError as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE
    except (BackendError, ToolkitError) as exc:
        print(f"stage failure: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
