import json

import numpy as np
import pytest

from sr3d.errors import ValidationError
from sr3d.qa import (
    CATEGORIES,
    MRA_THRESHOLDS,
    QaItem,
    eval_choice,
    eval_metric,
    eval_mra,
    evaluate,
    generate,
    gt_distance,
    gt_height,
    gt_width,
    parse_metric_prediction,
    read_predictions_jsonl,
    read_qa_jsonl,
    validate_quotas,
    write_qa_jsonl,
)
from sr3d.scene import OrientedBox3D, Scene
from sr3d.synth import make_scene

PUBLISHED_QUOTAS = {
    "thin_wide": 219,
    "tall_short": 231,
    "big_small": 231,
    "multi_simple": 117,
    "multi_complex": 500,
    "width": 496,
    "distance": 242,
    "height": 464,
}


def scene_with_boxes(boxes, name="boxes"):
    base = make_scene(seed=0, n_frames=1, n_boxes=1, width=16, height=12, with_holes=False)
    return Scene(frames=list(base.frames), boxes=boxes, name=name)


def box(bid, center, size, yaw=0.0, label="thing"):
    return OrientedBox3D(center=np.array(center, float), size=np.array(size, float), yaw=yaw, label=label, id=bid)


def recompute_choice(item: QaItem, boxes_by_id) -> int | str:
    """Independent ground-truth recomputation straight from box geometry."""
    regs = [boxes_by_id[i] for i in item.region_ids]
    q = item.question.lower()

    def width(b):
        return max(b.size[0], b.size[1])

    def height(b):
        return b.size[2]

    def volume(b):
        return b.size[0] * b.size[1] * b.size[2]

    def dist(a, b):
        return float(np.linalg.norm(a.center - b.center))

    if item.category in ("thin_wide", "tall_short", "big_small"):
        qty = {"thin_wide": width, "tall_short": height, "big_small": volume}[item.category]
        values = [qty(b) for b in regs]
        wants_min = any(w in q for w in ("thinner", "narrower", "shorter", "smaller"))
        pick = min(range(2), key=lambda k: values[k]) if wants_min else max(range(2), key=lambda k: values[k])
        return pick + 1
    if item.category == "multi_simple":
        if "tallest" in q:
            qty, reverse = height, True
        elif "widest" in q:
            qty, reverse = width, True
        elif "largest" in q:
            qty, reverse = volume, True
        elif "shortest" in q:
            qty, reverse = height, False
        else:
            raise AssertionError(f"unrecognized multi_simple question: {item.question}")
        values = [qty(b) for b in regs]
        pick = max(range(len(values)), key=lambda k: values[k]) if reverse else min(
            range(len(values)), key=lambda k: values[k]
        )
        return pick + 1
    if item.category == "multi_complex":
        if "taller" in q:
            qty = height
        elif "wider" in q:
            qty = width
        elif "bigger" in q:
            qty = volume
        else:
            raise AssertionError(f"unrecognized multi_complex question: {item.question}")
        subject, other, near, far = regs
        ok = qty(subject) > qty(other) and dist(subject, near) < dist(subject, far)
        return "yes" if ok else "no"
    raise AssertionError(f"not a choice category: {item.category}")


def recompute_value(item: QaItem, boxes_by_id) -> float:
    regs = [boxes_by_id[i] for i in item.region_ids]
    if item.category == "width":
        return max(regs[0].size[0], regs[0].size[1])
    if item.category == "height":
        return float(regs[0].size[2])
    if item.category == "distance":
        return float(np.linalg.norm(regs[0].center - regs[1].center))
    raise AssertionError(f"not a metric category: {item.category}")


class TestGroundTruthOps:
    def test_width_rule(self):
        assert gt_width(box(1, [0, 0, 0], [2, 1, 3])) == 2
        assert gt_width(box(1, [0, 0, 0], [1, 1, 1])) == 1
        assert gt_width(box(1, [0, 0, 0], [0.4, 0.9, 0.5])) == 0.9

    def test_height_rule(self):
        assert gt_height(box(1, [0, 0, 0], [2, 1, 3])) == 3
        assert gt_height(box(1, [0, 0, 0], [1, 1, 0.8])) == pytest.approx(0.8)

    def test_distance(self):
        a = box(1, [0, 0, 0], [1, 1, 1])
        b = box(2, [3, 4, 0], [1, 1, 1])
        assert gt_distance(a, b) == 5.0
        assert gt_distance(b, a) == 5.0
        c = box(3, [0, 0, 0], [1, 1, 1])
        assert gt_distance(a, c) == 0.0
        with pytest.raises(ValueError):
            gt_distance(a, a)


class TestGenerate:
    def test_tall_short_picks_taller(self):
        scene = scene_with_boxes(
            [box(1, [0, 0, 0.5], [1, 1, 1.0]), box(2, [2, 0, 1.0], [1, 1, 2.0])]
        )
        result = generate(scene, {"tall_short": 1}, seed=0)
        (item,) = result.items
        picked_id = item.region_ids[item.gt_choice - 1]
        # box 2 is taller; the template decides which end the question asks for
        assert picked_id == (1 if "shorter" in item.question.lower() else 2)

    def test_near_ties_are_skipped(self):
        scene = scene_with_boxes(
            [box(1, [0, 0, 0.5], [1, 1, 1.0]), box(2, [2, 0, 0.5], [1, 1, 1.1])]
        )
        result = generate(scene, {"tall_short": 1}, seed=0, min_ratio_gap=1.15)
        assert result.items == []
        assert result.shortfall == {"tall_short": 1}

    def test_equal_heights_excluded(self):
        scene = scene_with_boxes(
            [box(1, [0, 0, 0.5], [1, 1, 1.0]), box(2, [2, 0, 0.5], [2, 2, 1.0])]
        )
        result = generate(scene, {"tall_short": 1}, seed=0)
        assert result.shortfall == {"tall_short": 1}

    def test_deterministic_byte_identical(self):
        scene = make_scene(seed=5, n_frames=1, n_boxes=9, width=16, height=12)
        quotas = {c: 3 for c in CATEGORIES}
        a = generate(scene, quotas, seed=77)
        b = generate(scene, quotas, seed=77)
        dump_a = [json.dumps(i.to_dict(), sort_keys=True) for i in a.items]
        dump_b = [json.dumps(i.to_dict(), sort_keys=True) for i in b.items]
        assert dump_a == dump_b
        c = generate(scene, quotas, seed=78)
        assert [json.dumps(i.to_dict(), sort_keys=True) for i in c.items] != dump_a

    def test_answers_match_brute_force_recomputation(self):
        for seed in range(6):
            scene = make_scene(seed=seed, n_frames=1, n_boxes=3 + 2 * seed, width=16, height=12)
            boxes_by_id = {b.id: b for b in scene.boxes}
            result = generate(scene, {c: 4 for c in CATEGORIES}, seed=seed)
            assert result.items
            for item in result.items:
                if item.answer_kind == "choice":
                    assert item.gt_choice == recompute_choice(item, boxes_by_id), item.question
                else:
                    assert item.gt_value == pytest.approx(
                        recompute_value(item, boxes_by_id), rel=1e-12
                    )

    def test_choice_invariant_under_uniform_scaling(self):
        scene = make_scene(seed=9, n_frames=1, n_boxes=8, width=16, height=12)
        scale = 3.7
        scaled_boxes = [
            OrientedBox3D(
                center=b.center * scale, size=b.size * scale, yaw=b.yaw, label=b.label, id=b.id
            )
            for b in scene.boxes
        ]
        scaled = Scene(frames=list(scene.frames), boxes=scaled_boxes, name=scene.name)
        quotas = {c: 5 for c in CATEGORIES}
        a = generate(scene, quotas, seed=4)
        b = generate(scaled, quotas, seed=4)
        assert len(a.items) == len(b.items)
        for x, y in zip(a.items, b.items):
            assert x.category == y.category
            assert x.question == y.question
            assert x.region_ids == y.region_ids
            assert x.gt_choice == y.gt_choice
            if x.answer_kind == "metric":
                assert y.gt_value == pytest.approx(scale * x.gt_value, rel=1e-9)

    def test_quota_shortfall_reported_not_fatal(self):
        scene = scene_with_boxes([box(1, [0, 0, 0.5], [1, 1, 1.0]), box(2, [9, 0, 0.5], [2, 2, 2.0])])
        result = generate(scene, {"multi_simple": 3, "width": 5}, seed=1)
        assert result.shortfall["multi_simple"] == 3  # needs >= 3 boxes
        assert result.shortfall["width"] == 3  # only two boxes
        assert len([i for i in result.items if i.category == "width"]) == 2

    def test_ids_are_sequential(self):
        scene = make_scene(seed=2, n_frames=1, n_boxes=6, width=16, height=12)
        result = generate(scene, {c: 2 for c in CATEGORIES}, seed=0)
        assert [i.id for i in result.items] == list(range(len(result.items)))


class TestQuotas:
    def test_published_distribution_validates(self):
        clean = validate_quotas(PUBLISHED_QUOTAS)
        assert sum(clean.values()) == 2500
        assert set(clean) == set(CATEGORIES)

    def test_unknown_category_rejected(self):
        with pytest.raises(ValidationError):
            validate_quotas({"volume": 3})

    def test_negative_count_rejected(self):
        with pytest.raises(ValidationError):
            validate_quotas({"width": -1})

    def test_non_integer_rejected(self):
        with pytest.raises(ValidationError):
            validate_quotas({"width": 1.5})


class TestMetricEval:
    def test_examples(self):
        assert eval_metric(1.2, 1.0) is True
        assert eval_metric(1.0, 1.0) is True
        assert eval_metric(2.0, 1.0) is False

    def test_boundary(self):
        assert eval_metric(1.25, 1.0, delta=1.25) is True
        assert eval_metric(1.2500001, 1.0, delta=1.25) is False

    def test_symmetry(self, rng):
        for _ in range(50):
            pred = float(rng.uniform(0.1, 5))
            gt = float(rng.uniform(0.1, 5))
            assert eval_metric(pred, gt) == eval_metric(gt, pred)

    def test_nonpositive_pred_fails(self):
        assert eval_metric(0.0, 1.0) is False
        assert eval_metric(-2.0, 1.0) is False

    def test_bad_gt(self):
        with pytest.raises(ValueError):
            eval_metric(1.0, 0.0)


class TestMra:
    def _oracle(self, pred, gt):
        rel = abs(pred - gt) / gt
        return sum(1 for t in MRA_THRESHOLDS if rel < 1.0 - t) / 10

    def test_exact_prediction(self):
        assert eval_mra(1.0, 1.0) == 1.0
        assert eval_mra(4.2, 4.2) == 1.0

    def test_twenty_percent_off(self):
        # passes thresholds 0.50..0.75: six of ten
        for gt in (1.0, 2.0, 0.5):
            assert eval_mra(1.2 * gt, gt) == 0.6
            assert eval_mra(1.2 * gt, gt) == self._oracle(1.2 * gt, gt)

    def test_double_is_zero(self):
        assert eval_mra(2.0, 1.0) == 0.0
        assert eval_mra(2.0, 1.0) == self._oracle(2.0, 1.0)

    def test_threshold_ladder(self):
        assert len(MRA_THRESHOLDS) == 10
        assert MRA_THRESHOLDS[0] == 0.50
        assert MRA_THRESHOLDS[-1] == pytest.approx(0.95)

    def test_monotone_in_error(self, rng):
        gt = 2.0
        errors = sorted(rng.uniform(0, 3, 40))
        scores = [eval_mra(gt + e, gt) for e in errors]
        assert all(a >= b for a, b in zip(scores, scores[1:]))


class TestChoiceEval:
    def _item(self, gt_choice, n_regions=2):
        return QaItem(
            id=0,
            category="tall_short" if isinstance(gt_choice, int) else "multi_complex",
            question="q",
            region_ids=list(range(1, n_regions + 1)),
            answer_kind="choice",
            gt_choice=gt_choice,
            gt_value=None,
            scene="s",
            seed=0,
        )

    def test_region_form(self):
        assert eval_choice("Region 2", self._item(2)) is True
        assert eval_choice("  region 2 ", self._item(2)) is True
        assert eval_choice("region 1", self._item(2)) is False

    def test_letter_form(self):
        assert eval_choice("B", self._item(2)) is True
        assert eval_choice("a", self._item(1)) is True
        assert eval_choice("c", self._item(2)) is False

    def test_free_text_is_incorrect(self):
        assert eval_choice("the taller one", self._item(2)) is False

    def test_yes_no(self):
        assert eval_choice("Yes", self._item("yes")) is True
        assert eval_choice("no.", self._item("no")) is True
        assert eval_choice("maybe", self._item("yes")) is False


class TestPredictionParsing:
    def test_plain_and_united(self):
        assert parse_metric_prediction("1.5") == 1.5
        assert parse_metric_prediction("about 1.5 meters") == 1.5
        assert parse_metric_prediction("150 cm") == pytest.approx(1.5)
        assert parse_metric_prediction("1500 mm") == pytest.approx(1.5)

    def test_unparseable(self):
        assert parse_metric_prediction("quite wide") is None


class TestEvaluate:
    def _qa_and_preds(self, scene_seed=4):
        scene = make_scene(seed=scene_seed, n_frames=1, n_boxes=8, width=16, height=12)
        items = generate(scene, {c: 3 for c in CATEGORIES}, seed=1).items
        preds = {}
        for item in items:
            if item.answer_kind == "choice":
                preds[item.id] = (
                    f"region {item.gt_choice}" if isinstance(item.gt_choice, int) else item.gt_choice
                )
            else:
                preds[item.id] = f"{item.gt_value} meters"
        return items, preds

    def test_perfect_predictions(self):
        items, preds = self._qa_and_preds()
        report = evaluate(items, preds)
        doc = report.to_dict()
        assert doc["qualitative_average"] == 1.0
        assert doc["quantitative_average"] == 1.0
        assert doc["mra_average"] == 1.0
        assert sum(s["count"] for s in report.per_category.values()) == len(items)

    def test_doubled_metric_predictions_score_zero(self):
        items, preds = self._qa_and_preds()
        for item in items:
            if item.answer_kind == "metric":
                preds[item.id] = str(2 * item.gt_value)
        report = evaluate(items, preds)
        doc = report.to_dict()
        assert doc["quantitative_average"] == 0.0
        assert doc["mra_average"] == 0.0

    def test_unparseable_tallied(self):
        items, preds = self._qa_and_preds()
        n_metric = sum(1 for i in items if i.answer_kind == "metric")
        for item in items:
            if item.answer_kind == "metric":
                preds[item.id] = "no idea"
        report = evaluate(items, preds)
        assert report.unparsed_metric == n_metric
        assert report.to_dict()["quantitative_average"] == 0.0

    def test_missing_predictions_counted(self):
        items, preds = self._qa_and_preds()
        removed = items[0].id
        del preds[removed]
        report = evaluate(items, preds)
        assert report.missing_predictions == 1

    def test_table_renders(self):
        items, preds = self._qa_and_preds()
        table = evaluate(items, preds).format_table()
        assert "category" in table and "tall_short" in table


class TestJsonl:
    def test_round_trip(self, tmp_path):
        scene = make_scene(seed=6, n_frames=1, n_boxes=5, width=16, height=12)
        items = generate(scene, {"tall_short": 2, "distance": 2}, seed=3).items
        path = tmp_path / "qa.jsonl"
        write_qa_jsonl(items, path)
        loaded = read_qa_jsonl(path)
        assert [i.to_dict() for i in loaded] == [i.to_dict() for i in items]
        # schema pinned on every line
        for line in path.read_text().splitlines():
            assert json.loads(line)["schema"] == "sr3d-qa/1"

    def test_bad_schema_rejected(self, tmp_path):
        path = tmp_path / "qa.jsonl"
        path.write_text('{"schema": "other/9", "id": 0}\n')
        with pytest.raises(ValidationError):
            read_qa_jsonl(path)

    def test_predictions_reader(self, tmp_path):
        path = tmp_path / "pred.jsonl"
        path.write_text('{"id": 3, "prediction": "region 1"}\n{"id": 4, "prediction": "2.0"}\n')
        assert read_predictions_jsonl(path) == {3: "region 1", 4: "2.0"}

    def test_bad_prediction_line(self, tmp_path):
        path = tmp_path / "pred.jsonl"
        path.write_text('{"id": 3}\n')
        with pytest.raises(ValidationError):
            read_predictions_jsonl(path)
