import json

import numpy as np
import pytest

from conftest import paint_rect, solid_image
from oracles import iou_continuous
from propkit.errors import FormatError, ValidationError
from propkit.geometry import BBox
from propkit.images import ImageRef
from propkit.initial import (
    DEFAULT_BUDGET,
    InitialProposal,
    generate_builtin,
    load_proposals,
    read_proposal_file,
    select_for_image,
    write_proposal_file,
)


def _write_jsonl(path, records):
    path.write_text("\n".join(json.dumps(r) for r in records) + "\n")


def _record(image_id="a", x0=0, y0=0, x1=10, y1=10, score=1.0, **extra):
    rec = {"image_id": image_id, "x0": x0, "y0": y0, "x1": x1, "y1": y1, "score": score}
    rec.update(extra)
    return rec


class TestProposalFile:
    def test_roundtrip(self, tmp_path):
        path = tmp_path / "p.jsonl"
        proposals = {
            "b": [InitialProposal(BBox(0, 0, 5, 5), 2.0)],
            "a": [
                InitialProposal(BBox(1, 1, 4, 4), 1.0),
                InitialProposal(BBox(2, 2, 9, 9), 3.0),
            ],
        }
        write_proposal_file(path, proposals)
        lines = path.read_text().strip().splitlines()
        # images emitted in sorted id order
        assert json.loads(lines[0])["image_id"] == "a"
        assert json.loads(lines[-1])["image_id"] == "b"
        back = read_proposal_file(path)
        assert set(back) == {"a", "b"}
        assert back["a"][1].box.as_tuple() == (2, 2, 9, 9)

    def test_default_budget(self):
        assert DEFAULT_BUDGET == 300

    def test_sorted_and_truncated(self, tmp_path):
        path = tmp_path / "p.jsonl"
        _write_jsonl(
            path,
            [_record(score=s, x0=i, x1=i + 5) for i, s in enumerate([1.0, 5.0, 3.0, 2.0])],
        )
        got = load_proposals(path, "a", budget=3)
        assert [p.initial_score for p in got] == [5.0, 3.0, 2.0]

    def test_stable_order_on_score_ties(self, tmp_path):
        path = tmp_path / "p.jsonl"
        _write_jsonl(path, [_record(score=1.0, x0=i, x1=i + 5) for i in range(4)])
        got = load_proposals(path, "a")
        assert [p.box.x_min for p in got] == [0, 1, 2, 3]

    def test_missing_image_gives_empty(self, tmp_path):
        path = tmp_path / "p.jsonl"
        _write_jsonl(path, [_record(image_id="other")])
        assert load_proposals(path, "a") == []

    def test_negative_origin_clamped_on_read(self, tmp_path):
        path = tmp_path / "p.jsonl"
        _write_jsonl(path, [_record(x0=-3, y0=-1)])
        got = read_proposal_file(path)["a"]
        assert got[0].box.as_tuple() == (0, 0, 10, 10)

    def test_clamp_to_image_size(self, tmp_path):
        path = tmp_path / "p.jsonl"
        _write_jsonl(path, [_record(x1=100, y1=90)])
        got = load_proposals(path, "a", image_size=(40, 30))
        assert got[0].box.as_tuple() == (0, 0, 40, 30)

    def test_collapsing_clamp_is_format_error(self, tmp_path):
        path = tmp_path / "p.jsonl"
        _write_jsonl(path, [_record(x0=50, x1=60)])
        with pytest.raises(FormatError, match="collapses"):
            load_proposals(path, "a", image_size=(40, 30))

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "p.jsonl"
        path.write_text("\n" + json.dumps(_record()) + "\n\n")
        assert len(read_proposal_file(path)["a"]) == 1

    def test_extra_fields_tolerated(self, tmp_path):
        path = tmp_path / "p.jsonl"
        _write_jsonl(path, [_record(note="hand-drawn")])
        assert len(read_proposal_file(path)["a"]) == 1

    @pytest.mark.parametrize(
        "mutation, message",
        [
            ({"score": None}, "'score' must be a number"),
            ({"score": -1.0}, '"score" must be >= 0'),
            ({"x1": 0}, "non-positive extent"),
            ({"x1": float("inf")}, "must be finite"),
            ({"image_id": 7}, '"image_id" must be a string'),
        ],
    )
    def test_bad_records_name_the_line(self, tmp_path, mutation, message):
        path = tmp_path / "p.jsonl"
        bad = _record()
        bad.update(mutation)
        _write_jsonl(path, [_record(x0=20, x1=30), bad])
        with pytest.raises(FormatError) as exc_info:
            read_proposal_file(path)
        assert "line 2" in str(exc_info.value)
        assert message.split()[0].strip("'\"") in str(exc_info.value)

    def test_missing_field_named(self, tmp_path):
        path = tmp_path / "p.jsonl"
        rec = _record()
        del rec["y1"]
        _write_jsonl(path, [rec])
        with pytest.raises(FormatError, match="'y1'"):
            read_proposal_file(path)

    def test_invalid_json_line(self, tmp_path):
        path = tmp_path / "p.jsonl"
        path.write_text('{"image_id": "a",\n')
        with pytest.raises(FormatError, match="line 1"):
            read_proposal_file(path)

    def test_budget_must_be_positive(self, tmp_path):
        path = tmp_path / "p.jsonl"
        _write_jsonl(path, [_record()])
        with pytest.raises(ValidationError):
            load_proposals(path, "a", budget=0)


def _busy_image(width=96, height=80):
    pixels = solid_image(width, height)
    paint_rect(pixels, (15, 10, 50, 45), (220, 40, 40))
    paint_rect(pixels, (60, 50, 90, 75), (40, 40, 220))
    return ImageRef("busy", width, height, pixels)


class TestBuiltinGenerator:
    def test_boxes_within_image_and_budget(self):
        image = _busy_image()
        proposals = generate_builtin(image, budget=50)
        assert 0 < len(proposals) <= 50
        for p in proposals:
            x0, y0, x1, y1 = p.box.as_tuple()
            assert 0 <= x0 < x1 <= image.width
            assert 0 <= y0 < y1 <= image.height
            assert p.initial_score >= 0.0

    def test_scores_descending(self):
        proposals = generate_builtin(_busy_image(), budget=40)
        scores = [p.initial_score for p in proposals]
        assert scores == sorted(scores, reverse=True)

    def test_deterministic(self):
        a = generate_builtin(_busy_image(), budget=30)
        b = generate_builtin(_busy_image(), budget=30)
        assert [(p.box.as_tuple(), p.initial_score) for p in a] == [
            (p.box.as_tuple(), p.initial_score) for p in b
        ]

    def test_results_are_deduplicated(self):
        proposals = generate_builtin(_busy_image(), budget=150)
        boxes = [p.box.as_tuple() for p in proposals]
        for i in range(len(boxes)):
            for j in range(i + 1, len(boxes)):
                assert iou_continuous(boxes[i], boxes[j]) <= 0.98

    def test_budget_covers_both_objects(self):
        # the candidate pool must contain a decent box for each rectangle;
        # ranking them highly is the scoring stages' job, not the generator's
        proposals = generate_builtin(_busy_image(), budget=300)
        for target in ((15, 10, 50, 45), (60, 50, 90, 75)):
            best = max(iou_continuous(p.box.as_tuple(), target) for p in proposals)
            assert best > 0.5

    def test_tiny_image_rejected(self):
        image = ImageRef("tiny", 8, 8, solid_image(8, 8))
        with pytest.raises(ValidationError, match="16"):
            generate_builtin(image)

    def test_requires_pixels(self):
        with pytest.raises(ValidationError):
            generate_builtin(ImageRef("nopix", 64, 64, None))
