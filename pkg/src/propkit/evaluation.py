"""Ground-truth ingestion and proposal/detection metrics.

Recall@X counts a ground-truth box as found when any of the top-k
proposals of its image exceeds the IoU threshold (strictly). AR averages
recall over the ten thresholds 0.5, 0.55, ..., 0.95. AP@0.5 labels each
proposal with its argmax category, applies per-class NMS, and scores the
ranked detections with all-point interpolated average precision.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .errors import FormatError, ValidationError
from .geometry import BBox, iou, nms

__all__ = [
    "GroundTruth",
    "MetricReport",
    "AR_THRESHOLDS",
    "DEFAULT_BUDGETS",
    "load_ground_truth",
    "recall_at",
    "average_recall",
    "detect_and_ap",
    "compute_report",
]

AR_THRESHOLDS = tuple((50 + 5 * i) / 100.0 for i in range(10))
DEFAULT_BUDGETS = (1, 10, 30, 50, 100)


@dataclass(frozen=True)
class GroundTruth:
    """Per-image annotated boxes with category names."""

    by_image: dict

    def __post_init__(self):
        for image_id, entries in self.by_image.items():
            if not isinstance(image_id, str):
                raise ValidationError(f"image id {image_id!r} is not a string")
            for box, category in entries:
                if not isinstance(box, BBox) or not isinstance(category, str):
                    raise ValidationError(
                        f"ground truth for {image_id!r} must hold (BBox, str) pairs"
                    )

    @property
    def image_ids(self) -> list[str]:
        return sorted(self.by_image)

    def boxes(self, image_id: str) -> list[BBox]:
        return [box for box, _ in self.by_image.get(image_id, [])]

    def boxes_by_image(self) -> dict[str, list[BBox]]:
        return {image_id: self.boxes(image_id) for image_id in self.by_image}

    def total_boxes(self) -> int:
        return sum(len(v) for v in self.by_image.values())

    def category_names(self) -> list[str]:
        names = {cat for entries in self.by_image.values() for _, cat in entries}
        return sorted(names)


def _coco_ground_truth(doc: dict, path: str) -> GroundTruth:
    for key in ("images", "annotations", "categories"):
        if not isinstance(doc.get(key), list):
            raise FormatError(f'missing or non-list "{key}"', location=path)
    id_to_name: dict = {}
    id_to_size: dict = {}
    for index, entry in enumerate(doc["images"]):
        where = f"{path}:images[{index}]"
        if not isinstance(entry, dict) or "id" not in entry:
            raise FormatError('image entry lacks "id"', location=where)
        file_name = entry.get("file_name")
        name = Path(file_name).stem if isinstance(file_name, str) else str(entry["id"])
        id_to_name[entry["id"]] = name
        width, height = entry.get("width"), entry.get("height")
        if isinstance(width, (int, float)) and isinstance(height, (int, float)):
            id_to_size[entry["id"]] = (float(width), float(height))
    categories: dict = {}
    for index, entry in enumerate(doc["categories"]):
        where = f"{path}:categories[{index}]"
        if not isinstance(entry, dict) or "id" not in entry or "name" not in entry:
            raise FormatError('category entry needs "id" and "name"', location=where)
        categories[entry["id"]] = str(entry["name"])

    by_image: dict[str, list] = {name: [] for name in id_to_name.values()}
    for index, ann in enumerate(doc["annotations"]):
        where = f"{path}:annotations[{index}]"
        if not isinstance(ann, dict):
            raise FormatError("annotation is not an object", location=where)
        image_ref = ann.get("image_id")
        if image_ref not in id_to_name:
            raise FormatError(f"unknown image_id {image_ref!r}", location=where)
        bbox = ann.get("bbox")
        if (
            not isinstance(bbox, list)
            or len(bbox) != 4
            or any(isinstance(v, bool) or not isinstance(v, (int, float)) for v in bbox)
        ):
            raise FormatError('"bbox" must be [x, y, w, h]', location=f"{where}.bbox")
        x, y, w, h = (float(v) for v in bbox)
        if w <= 0 or h <= 0:
            raise FormatError(
                f"box extent must be positive, got w={w} h={h}", location=f"{where}.bbox"
            )
        if ann.get("category_id") not in categories:
            raise FormatError(
                f"unknown category_id {ann.get('category_id')!r}",
                location=f"{where}.category_id",
            )
        x0, y0, x1, y1 = max(0.0, x), max(0.0, y), x + w, y + h
        if image_ref in id_to_size:
            width, height = id_to_size[image_ref]
            x0, x1 = min(x0, width), min(x1, width)
            y0, y1 = min(y0, height), min(y1, height)
        if x1 <= x0 or y1 <= y0:
            raise FormatError(
                "box falls outside its image after clamping", location=f"{where}.bbox"
            )
        by_image[id_to_name[image_ref]].append(
            (BBox(x0, y0, x1, y1), categories[ann["category_id"]])
        )
    return GroundTruth(by_image)


def _jsonl_ground_truth(text: str, path: str) -> GroundTruth:
    by_image: dict[str, list] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(
                f"invalid JSON: {exc.msg}", location=f"{path}:line {line_no}"
            ) from exc
        if not isinstance(record, dict):
            raise FormatError("record is not an object", location=f"{path}:line {line_no}")
        for key in ("image_id", "x0", "y0", "x1", "y1", "category"):
            if key not in record:
                raise FormatError(
                    f"missing field {key!r}", location=f"{path}:line {line_no}"
                )
        if not isinstance(record["image_id"], str) or not isinstance(record["category"], str):
            raise FormatError(
                '"image_id" and "category" must be strings',
                location=f"{path}:line {line_no}",
            )
        try:
            box = BBox(
                float(record["x0"]), float(record["y0"]),
                float(record["x1"]), float(record["y1"]),
            )
        except (ValidationError, TypeError) as exc:
            raise FormatError(str(exc), location=f"{path}:line {line_no}") from exc
        by_image.setdefault(record["image_id"], []).append((box, record["category"]))
    return GroundTruth(by_image)


def load_ground_truth(path: str | Path) -> GroundTruth:
    """Read COCO-style JSON or the one-record-per-line JSON variant."""
    text = Path(path).read_text(encoding="utf-8")
    name = str(path)
    try:
        doc = json.loads(text)
    except json.JSONDecodeError:
        doc = None
    if isinstance(doc, dict) and "annotations" in doc:
        return _coco_ground_truth(doc, name)
    return _jsonl_ground_truth(text, name)


def _ranked(proposals: Sequence[tuple[BBox, float]]) -> list[BBox]:
    order = sorted(range(len(proposals)), key=lambda i: (-proposals[i][1], i))
    return [proposals[i][0] for i in order]


def recall_at(
    proposals_by_image: Mapping[str, Sequence[tuple[BBox, float]]],
    gt: GroundTruth,
    iou_threshold: float,
    budget: int,
) -> float:
    """Fraction of ground-truth boxes with a top-k witness above the threshold."""
    if budget < 1:
        raise ValidationError(f"budget must be >= 1, got {budget}")
    total = gt.total_boxes()
    if total == 0:
        raise ValidationError("recall is undefined without ground-truth boxes")
    found = 0
    for image_id in gt.image_ids:
        gt_boxes = gt.boxes(image_id)
        if not gt_boxes:
            continue
        top = _ranked(proposals_by_image.get(image_id, []))[:budget]
        for gt_box in gt_boxes:
            if any(iou(p, gt_box) > iou_threshold for p in top):
                found += 1
    return found / total


def average_recall(
    proposals_by_image: Mapping[str, Sequence[tuple[BBox, float]]],
    gt: GroundTruth,
    budget: int,
) -> float:
    """Mean recall over the IoU thresholds 0.5 to 0.95 in steps of 0.05."""
    values = [recall_at(proposals_by_image, gt, thr, budget) for thr in AR_THRESHOLDS]
    return sum(values) / len(values)


def _all_point_ap(tp_flags: list[bool], num_gt: int) -> float:
    """Area under the interpolated precision envelope over recall."""
    if num_gt == 0:
        return 0.0
    precisions: list[float] = []
    recalls: list[float] = []
    tp_cum = 0
    for index, is_tp in enumerate(tp_flags, start=1):
        tp_cum += int(is_tp)
        precisions.append(tp_cum / index)
        recalls.append(tp_cum / num_gt)
    ap = 0.0
    prev_recall = 0.0
    for index in range(len(tp_flags)):
        if not tp_flags[index]:
            continue
        envelope = max(precisions[index:])
        ap += (recalls[index] - prev_recall) * envelope
        prev_recall = recalls[index]
    return ap


def detect_and_ap(
    detections_by_image: Mapping[str, Sequence[tuple[BBox, float, str]]],
    gt: GroundTruth,
    nms_threshold: float = 0.5,
    iou_threshold: float = 0.5,
) -> dict:
    """Per-class AP after per-class NMS, plus the mean over GT classes.

    Matching is greedy one-to-one by descending detection score: each
    detection claims the unmatched ground-truth box of its class with the
    highest IoU, counting as a true positive only above the IoU threshold.
    Classes present in the ground truth but never predicted score 0.
    """
    if gt.total_boxes() == 0:
        raise ValidationError("AP is undefined without ground-truth boxes")
    # Per-image, per-class NMS; survivors pooled per class across images.
    pooled: dict[str, list[tuple[str, BBox, float]]] = {}
    for image_id in sorted(detections_by_image):
        by_class: dict[str, list[tuple[BBox, float]]] = {}
        for box, score, category in detections_by_image[image_id]:
            by_class.setdefault(category, []).append((box, float(score)))
        for category in sorted(by_class):
            for box, score in nms(by_class[category], nms_threshold):
                pooled.setdefault(category, []).append((image_id, box, score))

    per_class: dict[str, float] = {}
    for category in gt.category_names():
        class_gt: dict[str, list[BBox]] = {}
        for image_id, entries in gt.by_image.items():
            boxes = [box for box, name in entries if name == category]
            if boxes:
                class_gt[image_id] = boxes
        num_gt = sum(len(v) for v in class_gt.values())
        detections = sorted(
            pooled.get(category, []),
            key=lambda item: (-item[2], item[0], item[1].as_tuple()),
        )
        matched: dict[str, set[int]] = {image_id: set() for image_id in class_gt}
        tp_flags: list[bool] = []
        for image_id, box, _score in detections:
            candidates = class_gt.get(image_id, [])
            best_index, best_iou = -1, 0.0
            for gt_index, gt_box in enumerate(candidates):
                if gt_index in matched.get(image_id, set()):
                    continue
                overlap = iou(box, gt_box)
                if overlap > best_iou:
                    best_index, best_iou = gt_index, overlap
            if best_index >= 0 and best_iou > iou_threshold:
                matched[image_id].add(best_index)
                tp_flags.append(True)
            else:
                tp_flags.append(False)
        per_class[category] = _all_point_ap(tp_flags, num_gt)
    mean_ap = sum(per_class.values()) / len(per_class) if per_class else 0.0
    return {"per_class": per_class, "mAP": mean_ap}


@dataclass(frozen=True)
class MetricReport:
    """Recall and AR per budget, with an optional AP section."""

    budgets: tuple[int, ...]
    recall: dict
    average_recall: dict
    ap: dict | None = None
    mean_ap: float | None = None

    def __post_init__(self):
        for budget in self.budgets:
            for table in (self.recall, self.average_recall):
                value = table.get(budget)
                if value is None or not 0.0 <= value <= 1.0:
                    raise ValidationError(
                        f"metric at budget {budget} missing or outside [0, 1]: {value}"
                    )
        pairs = list(zip(self.budgets, self.budgets[1:]))
        for small, large in pairs:
            if self.recall[small] > self.recall[large] + 1e-12:
                raise ValidationError(
                    f"recall decreased from budget {small} to {large}"
                )

    def as_dict(self) -> dict:
        out = {
            "budgets": list(self.budgets),
            "recall_at_0.5": {str(k): self.recall[k] for k in self.budgets},
            "average_recall": {str(k): self.average_recall[k] for k in self.budgets},
        }
        if self.ap is not None:
            out["ap_at_0.5"] = dict(sorted(self.ap.items()))
            out["mean_ap"] = self.mean_ap
        return out

    def render_table(self) -> str:
        header = ["metric"] + [f"@{k}" for k in self.budgets]
        rows = [
            ["Recall@0.5"] + [f"{self.recall[k]:.4f}" for k in self.budgets],
            ["AR"] + [f"{self.average_recall[k]:.4f}" for k in self.budgets],
        ]
        widths = [
            max(len(col[i]) for col in [header] + rows)
            for i in range(len(header))
        ]
        lines = [
            "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(line))
            for line in [header] + rows
        ]
        if self.ap is not None:
            lines.append("")
            lines.append(f"mAP@0.5: {self.mean_ap:.4f}")
            for name in sorted(self.ap):
                lines.append(f"  AP[{name}]: {self.ap[name]:.4f}")
        return "\n".join(lines) + "\n"


def compute_report(
    proposals_by_image: Mapping[str, Sequence[tuple[BBox, float]]],
    gt: GroundTruth,
    budgets: Sequence[int] = DEFAULT_BUDGETS,
    detections_by_image: Mapping[str, Sequence[tuple[BBox, float, str]]] | None = None,
    nms_threshold: float = 0.5,
) -> MetricReport:
    """Full metric sweep; the AP section appears when detections are given."""
    budgets = tuple(sorted({int(b) for b in budgets}))
    if not budgets or any(b < 1 for b in budgets):
        raise ValidationError(f"budgets must be positive, got {budgets}")
    recall = {k: recall_at(proposals_by_image, gt, 0.5, k) for k in budgets}
    ar = {k: average_recall(proposals_by_image, gt, k) for k in budgets}
    ap = mean_ap = None
    if detections_by_image is not None:
        result = detect_and_ap(detections_by_image, gt, nms_threshold)
        ap, mean_ap = result["per_class"], result["mAP"]
    return MetricReport(
        budgets=budgets, recall=recall, average_recall=ar, ap=ap, mean_ap=mean_ap
    )
