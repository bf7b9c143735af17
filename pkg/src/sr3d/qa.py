"""Template-based spatial QA generation from oriented 3D boxes, plus the
matching evaluation metrics.

Eight categories: three pairwise comparisons (thin_wide, tall_short,
big_small), extremal multiple choice (multi_simple), composed predicates
(multi_complex), and three metric questions (width, distance, height).
Ground truths come straight from box geometry in world meters: width is
max(size_x, size_y), height is size_z, distance is center-to-center.
Comparative items are only emitted when the quantity ratio clears a tie
gap, so every answer is unambiguous.

Metric predictions are graded two ways: a success rate thresholding
max(pred/gt, gt/pred) at delta (default 1.25), and mean relative accuracy
over the 0.50..0.95 threshold ladder.
"""

from __future__ import annotations

import itertools
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .scene import OrientedBox3D, Scene

CATEGORIES = (
    "thin_wide",
    "tall_short",
    "big_small",
    "multi_simple",
    "multi_complex",
    "width",
    "distance",
    "height",
)
CHOICE_CATEGORIES = ("thin_wide", "tall_short", "big_small", "multi_simple", "multi_complex")
METRIC_CATEGORIES = ("width", "distance", "height")

QA_SCHEMA = "sr3d-qa/1"

DEFAULT_DELTA = 1.25
DEFAULT_TIE_GAP = 1.15
MRA_THRESHOLDS = tuple(0.50 + 0.05 * i for i in range(10))

_PAIRWISE_QUANTITY = {"thin_wide": "width", "tall_short": "height", "big_small": "volume"}


def gt_width(box: OrientedBox3D) -> float:
    """Multi-view width: the larger of the two horizontal extents."""
    return float(max(box.size[0], box.size[1]))


def gt_height(box: OrientedBox3D) -> float:
    return float(box.size[2])


def gt_distance(a: OrientedBox3D, b: OrientedBox3D) -> float:
    """Center-to-center Euclidean distance in meters."""
    if a.id == b.id:
        raise ValueError(f"distance needs two distinct boxes, got id {a.id} twice")
    return float(np.linalg.norm(a.center - b.center))


def box_volume(box: OrientedBox3D) -> float:
    return float(np.prod(box.size))


_QUANTITIES = {"width": gt_width, "height": gt_height, "volume": box_volume}


@dataclass(frozen=True)
class QaItem:
    """One generated question with its machine-gradeable ground truth.

    ``gt_choice`` is either a 1-based region number (pairwise/extremal
    questions) or a "yes"/"no" label (predicate questions); ``gt_value``
    is meters for metric questions.
    """

    id: int
    category: str
    question: str
    region_ids: list[int]
    answer_kind: str
    gt_choice: int | str | None
    gt_value: float | None
    scene: str
    seed: int

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValidationError(f"unknown category '{self.category}'")
        if self.answer_kind not in ("choice", "metric"):
            raise ValidationError(f"answer_kind must be 'choice' or 'metric', got {self.answer_kind}")
        if self.answer_kind == "metric":
            if self.gt_value is None or not np.isfinite(self.gt_value) or self.gt_value <= 0:
                raise ValidationError(f"metric item {self.id} needs a positive finite gt_value")
        else:
            if isinstance(self.gt_choice, int):
                if not 1 <= self.gt_choice <= len(self.region_ids):
                    raise ValidationError(
                        f"choice item {self.id}: region {self.gt_choice} not among its "
                        f"{len(self.region_ids)} regions"
                    )
            elif self.gt_choice not in ("yes", "no"):
                raise ValidationError(f"choice item {self.id}: bad gt_choice {self.gt_choice!r}")

    def to_dict(self) -> dict:
        return {
            "schema": QA_SCHEMA,
            "id": self.id,
            "category": self.category,
            "question": self.question,
            "region_ids": list(self.region_ids),
            "answer_kind": self.answer_kind,
            "gt_choice": self.gt_choice,
            "gt_value": self.gt_value,
            "unit": "meters" if self.answer_kind == "metric" else None,
            "scene": self.scene,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "QaItem":
        if doc.get("schema") != QA_SCHEMA:
            raise ValidationError(f"expected schema '{QA_SCHEMA}', got {doc.get('schema')!r}")
        return cls(
            id=int(doc["id"]),
            category=str(doc["category"]),
            question=str(doc["question"]),
            region_ids=[int(v) for v in doc["region_ids"]],
            answer_kind=str(doc["answer_kind"]),
            gt_choice=doc.get("gt_choice"),
            gt_value=float(doc["gt_value"]) if doc.get("gt_value") is not None else None,
            scene=str(doc.get("scene", "")),
            seed=int(doc.get("seed", 0)),
        )


@dataclass
class GenerationResult:
    items: list[QaItem]
    shortfall: dict[str, int] = field(default_factory=dict)


def load_templates() -> dict:
    with resources.files("sr3d").joinpath("templates.json").open("r") as f:
        return json.load(f)


def validate_quotas(quotas: dict) -> dict[str, int]:
    """Check a quotas mapping: known categories, nonnegative integer counts."""
    clean = {}
    for key, value in quotas.items():
        if key not in CATEGORIES:
            raise ValidationError(f"unknown QA category '{key}' (expected one of {CATEGORIES})")
        if not isinstance(value, int) or isinstance(value, bool) or value < 0:
            raise ValidationError(f"quota for '{key}' must be a nonnegative integer, got {value!r}")
        clean[key] = value
    return clean


def _region_list_text(count: int) -> str:
    refs = [f"<region {k}>" for k in range(1, count + 1)]
    return ", ".join(refs[:-1]) + f", or {refs[-1]}"


def _fill(text: str, region_ids: list[int]) -> str:
    # placeholders are positional; region_ids fixes which box each refers to
    if "{regions}" in text:
        text = text.replace("{regions}", _region_list_text(len(region_ids)))
    return text


def generate(
    scene: Scene,
    quotas: dict[str, int],
    seed: int,
    min_ratio_gap: float = DEFAULT_TIE_GAP,
) -> GenerationResult:
    """Generate QA items for a scene, deterministically for (scene, quotas, seed).

    Quotas that the scene's geometry cannot satisfy (not enough boxes, or
    all candidate tuples within the tie gap) produce partial output and a
    per-category shortfall report rather than an error.
    """
    quotas = validate_quotas(quotas)
    templates = load_templates()
    rng = np.random.default_rng(seed)
    boxes = scene.boxes
    items: list[QaItem] = []
    shortfall: dict[str, int] = {}
    next_id = 0

    def emit(category, question, region_ids, gt_choice=None, gt_value=None):
        nonlocal next_id
        kind = "metric" if category in METRIC_CATEGORIES else "choice"
        items.append(
            QaItem(
                id=next_id,
                category=category,
                question=question,
                region_ids=region_ids,
                answer_kind=kind,
                gt_choice=gt_choice,
                gt_value=gt_value,
                scene=scene.name,
                seed=seed,
            )
        )
        next_id += 1

    for category in CATEGORIES:
        quota = quotas.get(category, 0)
        if quota == 0:
            continue
        emitted = 0
        cat_templates = templates[category]

        if category in _PAIRWISE_QUANTITY:
            qfn = _QUANTITIES[_PAIRWISE_QUANTITY[category]]
            candidates = []
            for i, j in itertools.combinations(range(len(boxes)), 2):
                va, vb = qfn(boxes[i]), qfn(boxes[j])
                if min(va, vb) > 0 and max(va, vb) / min(va, vb) >= min_ratio_gap:
                    candidates.append((i, j))
            order = rng.permutation(len(candidates))
            for pick in order[:quota]:
                i, j = candidates[pick]
                if rng.random() < 0.5:
                    i, j = j, i
                template = cat_templates[int(rng.integers(len(cat_templates)))]
                pair = [boxes[i], boxes[j]]
                values = [qfn(b) for b in pair]
                winner = int(np.argmax(values)) if template["target"] == "max" else int(np.argmin(values))
                emit(
                    category,
                    _fill(template["text"], [b.id for b in pair]),
                    [b.id for b in pair],
                    gt_choice=winner + 1,
                )
                emitted += 1

        elif category == "multi_simple":
            subsets = [list(c) for c in itertools.combinations(range(len(boxes)), 3)]
            subsets += [list(c) for c in itertools.combinations(range(len(boxes)), 4)]
            order = rng.permutation(len(subsets))
            for pick in order:
                if emitted >= quota:
                    break
                subset = [boxes[k] for k in subsets[pick]]
                subset = [subset[k] for k in rng.permutation(len(subset))]
                template = cat_templates[int(rng.integers(len(cat_templates)))]
                qfn = _QUANTITIES[template["quantity"]]
                values = [qfn(b) for b in subset]
                ranked = sorted(values, reverse=template["target"] == "max")
                # the winner must beat the runner-up by the tie gap
                lead, runner = ranked[0], ranked[1]
                if template["target"] == "min":
                    lead, runner = runner, lead
                if runner <= 0 or lead / runner < min_ratio_gap:
                    continue
                winner = (
                    int(np.argmax(values)) if template["target"] == "max" else int(np.argmin(values))
                )
                emit(
                    category,
                    _fill(template["text"], [b.id for b in subset]),
                    [b.id for b in subset],
                    gt_choice=winner + 1,
                )
                emitted += 1

        elif category == "multi_complex":
            seen: set[tuple] = set()
            attempts = 0
            max_attempts = max(400, quota * 80)
            while emitted < quota and attempts < max_attempts and len(boxes) >= 4:
                attempts += 1
                picks = rng.choice(len(boxes), size=4, replace=False)
                template = cat_templates[int(rng.integers(len(cat_templates)))]
                key = (tuple(int(p) for p in picks), template["quantity"])
                if key in seen:
                    continue
                seen.add(key)
                subject, other, near, far = (boxes[int(p)] for p in picks)
                qfn = _QUANTITIES[template["quantity"]]
                v_s, v_o = qfn(subject), qfn(other)
                if min(v_s, v_o) <= 0 or max(v_s, v_o) / min(v_s, v_o) < min_ratio_gap:
                    continue
                d_near = gt_distance(subject, near)
                d_far = gt_distance(subject, far)
                if min(d_near, d_far) <= 0 or max(d_near, d_far) / min(d_near, d_far) < min_ratio_gap:
                    continue
                answer = "yes" if (v_s > v_o and d_near < d_far) else "no"
                ids = [subject.id, other.id, near.id, far.id]
                emit(category, _fill(template["text"], ids), ids, gt_choice=answer)
                emitted += 1

        elif category in ("width", "height"):
            qfn = gt_width if category == "width" else gt_height
            order = rng.permutation(len(boxes))
            for pick in order[:quota]:
                box = boxes[int(pick)]
                template = cat_templates[int(rng.integers(len(cat_templates)))]
                emit(category, _fill(template["text"], [box.id]), [box.id], gt_value=qfn(box))
                emitted += 1

        else:  # distance
            candidates = [
                (i, j)
                for i, j in itertools.combinations(range(len(boxes)), 2)
                if gt_distance(boxes[i], boxes[j]) > 1e-9
            ]
            order = rng.permutation(len(candidates))
            for pick in order[:quota]:
                i, j = candidates[pick]
                if rng.random() < 0.5:
                    i, j = j, i
                template = cat_templates[int(rng.integers(len(cat_templates)))]
                pair = [boxes[i], boxes[j]]
                emit(
                    category,
                    _fill(template["text"], [b.id for b in pair]),
                    [b.id for b in pair],
                    gt_value=gt_distance(pair[0], pair[1]),
                )
                emitted += 1

        if emitted < quota:
            shortfall[category] = quota - emitted

    return GenerationResult(items=items, shortfall=shortfall)


def write_qa_jsonl(items: list[QaItem], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as f:
        for item in items:
            f.write(json.dumps(item.to_dict(), sort_keys=True) + "\n")


def read_qa_jsonl(path: str | Path) -> list[QaItem]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"QA file not found: {path}")
    items = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            items.append(QaItem.from_dict(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad QA record: {exc}") from exc
    return items


def read_predictions_jsonl(path: str | Path) -> dict[int, str]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"predictions file not found: {path}")
    preds: dict[int, str] = {}
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
            preds[int(doc["id"])] = str(doc["prediction"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"{path}:{lineno}: bad prediction record: {exc}") from exc
    return preds


def eval_metric(pred: float, gt: float, delta: float = DEFAULT_DELTA) -> bool:
    """Success iff max(pred/gt, gt/pred) <= delta; nonpositive pred fails."""
    if gt <= 0:
        raise ValueError(f"gt must be > 0, got {gt}")
    if not np.isfinite(pred) or pred <= 0:
        return False
    return max(pred / gt, gt / pred) <= delta


def eval_mra(pred: float, gt: float, thresholds: tuple[float, ...] = MRA_THRESHOLDS) -> float:
    """Mean relative accuracy: fraction of thresholds t with |pred-gt|/gt < 1-t."""
    if gt <= 0:
        raise ValueError(f"gt must be > 0, got {gt}")
    if not np.isfinite(pred):
        return 0.0
    rel = abs(pred - gt) / gt
    return sum(1 for t in thresholds if rel < 1.0 - t) / len(thresholds)


_METRIC_RE = re.compile(
    r"(-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)\s*(m|meter|meters|cm|centimeter|centimeters|mm|millimeter|millimeters)?\b"
)
_UNIT_SCALE = {
    None: 1.0,
    "m": 1.0,
    "meter": 1.0,
    "meters": 1.0,
    "cm": 0.01,
    "centimeter": 0.01,
    "centimeters": 0.01,
    "mm": 0.001,
    "millimeter": 0.001,
    "millimeters": 0.001,
}


def parse_metric_prediction(text: str) -> float | None:
    """Pull a metric value in meters out of a free-form prediction string.

    Accepts a bare number (assumed meters) or a number with an m/cm/mm
    unit. Returns None when no finite number is present.
    """
    match = _METRIC_RE.search(text.strip().lower())
    if not match:
        return None
    value = float(match.group(1)) * _UNIT_SCALE[match.group(2)]
    return value if np.isfinite(value) else None


def _normalize_choice(text: str) -> str:
    return re.sub(r"\s+", " ", text.strip().lower().strip(".!<>")).strip()


def eval_choice(pred: str, item: QaItem) -> bool:
    """Grade a choice answer: accepts 'region k', the choice letter, or yes/no."""
    if item.answer_kind != "choice":
        raise ValueError(f"item {item.id} is not a choice question")
    norm = _normalize_choice(pred)
    if isinstance(item.gt_choice, str):
        return norm == item.gt_choice
    k = int(item.gt_choice)
    letter = chr(ord("a") + k - 1)
    return norm in (f"region {k}", letter)


@dataclass
class EvalReport:
    """Per-category rates plus macro averages; all rates live in [0, 1]."""

    per_category: dict[str, dict]
    total: int
    unparsed_metric: int
    missing_predictions: int
    delta: float

    def to_dict(self) -> dict:
        qual = [self.per_category[c]["accuracy"] for c in CHOICE_CATEGORIES if c in self.per_category]
        quant = [
            self.per_category[c]["success_rate"] for c in METRIC_CATEGORIES if c in self.per_category
        ]
        mras = [self.per_category[c]["mra"] for c in METRIC_CATEGORIES if c in self.per_category]
        return {
            "per_category": self.per_category,
            "total": self.total,
            "unparsed_metric": self.unparsed_metric,
            "missing_predictions": self.missing_predictions,
            "delta": self.delta,
            "qualitative_average": sum(qual) / len(qual) if qual else None,
            "quantitative_average": sum(quant) / len(quant) if quant else None,
            "mra_average": sum(mras) / len(mras) if mras else None,
        }

    def format_table(self) -> str:
        lines = [
            f"{'category':<14} {'count':>5} {'rate':>7} {'mra':>7}",
            "-" * 36,
        ]
        for category in CATEGORIES:
            if category not in self.per_category:
                continue
            stats = self.per_category[category]
            rate = stats.get("success_rate", stats.get("accuracy"))
            mra = stats.get("mra")
            mra_text = "-" if mra is None else f"{mra:.3f}"
            lines.append(f"{category:<14} {stats['count']:>5} {rate:>7.3f} {mra_text:>7}")
        doc = self.to_dict()
        lines.append("-" * 36)
        if doc["qualitative_average"] is not None:
            lines.append(f"qualitative average: {doc['qualitative_average']:.3f}")
        if doc["quantitative_average"] is not None:
            lines.append(
                f"quantitative average: {doc['quantitative_average']:.3f} "
                f"(success at delta={self.delta}), mra {doc['mra_average']:.3f}"
            )
        if self.unparsed_metric:
            lines.append(f"unparseable metric predictions: {self.unparsed_metric}")
        if self.missing_predictions:
            lines.append(f"items without predictions: {self.missing_predictions}")
        return "\n".join(lines)


def evaluate(
    items: list[QaItem], predictions: dict[int, str], delta: float = DEFAULT_DELTA
) -> EvalReport:
    """Score predictions against QA items, split per category.

    Choice items use normalized label matching; metric items use the
    success-rate threshold and MRA. Items whose prediction is missing or
    unparseable count as failures and are tallied separately.
    """
    per_category: dict[str, dict] = {}
    unparsed = 0
    missing = 0
    for item in items:
        stats = per_category.setdefault(
            item.category,
            {"count": 0, "correct": 0}
            if item.category in CHOICE_CATEGORIES
            else {"count": 0, "successes": 0, "mra_sum": 0.0},
        )
        stats["count"] += 1
        pred = predictions.get(item.id)
        if pred is None:
            missing += 1
            continue
        if item.answer_kind == "choice":
            if eval_choice(pred, item):
                stats["correct"] += 1
        else:
            value = parse_metric_prediction(pred)
            if value is None:
                unparsed += 1
                continue
            if eval_metric(value, item.gt_value, delta):
                stats["successes"] += 1
            stats["mra_sum"] += eval_mra(value, item.gt_value)

    for category, stats in per_category.items():
        if category in CHOICE_CATEGORIES:
            stats["accuracy"] = stats["correct"] / stats["count"]
        else:
            stats["success_rate"] = stats["successes"] / stats["count"]
            stats["mra"] = stats.pop("mra_sum") / stats["count"]

    return EvalReport(
        per_category=per_category,
        total=len(items),
        unparsed_metric=unparsed,
        missing_predictions=missing,
        delta=delta,
    )
