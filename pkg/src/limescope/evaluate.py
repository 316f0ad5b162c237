"""Classification metrics and explanation-quality checks.

The harness consumes prediction logs (JSON Lines, one record per line) and
emits accuracy, cross-entropy, a 2x2 confusion matrix and per-class
misclassification with percentages, as JSON and as an aligned text table.
Percentages render with two decimals, half-up.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

import numpy as np

from .dataset import DEFAULT_CLASSES, ClassLabel, DatasetManifest
from .errors import ContractError
from .fileio import read_json, write_json
from .image import RasterImage
from .perturb import FusionPolicy, apply_mask, segment_mean_colors
from .segmentation import SegmentMap
from .surrogate import Explanation
from .validation import check_probability_vector

#: probabilities are clipped to [LOG_CLIP, 1] before the loss takes logs
LOG_CLIP = 1e-12


@dataclass(frozen=True, eq=False)
class PredictionRecord:
    """One scored sample: id, ground truth, model probabilities."""

    sample_id: str
    true_label: ClassLabel
    probs: np.ndarray

    def __post_init__(self):
        probs = check_probability_vector(self.probs)
        probs.flags.writeable = False
        object.__setattr__(self, "probs", probs)

    @property
    def predicted(self) -> int:
        return int(np.argmax(self.probs))


def format_percent(count: int, total: int) -> str:
    """`count / total` as a percentage with two decimals, half-up: "94.70%"."""
    if total <= 0:
        raise ContractError(f"total must be positive, got {total}")
    value = (Decimal(count) * 100 / Decimal(total)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    return f"{value}%"


def read_prediction_log(path: str | Path, classes=DEFAULT_CLASSES) -> list[PredictionRecord]:
    """Parse a JSONL prediction log; malformed lines name their line number."""
    names = {label: name for name, label in classes}
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                label = int(obj["true_label"])
                record = PredictionRecord(
                    sample_id=str(obj["sample_id"]),
                    true_label=ClassLabel(label, names.get(label, f"class-{label}")),
                    probs=np.asarray(obj["probs"], dtype=np.float64),
                )
            except (KeyError, TypeError, ValueError, ContractError) as exc:
                raise ContractError(f"bad prediction log line {lineno}: {exc}") from exc
            records.append(record)
    if not records:
        raise ContractError(f"prediction log {path} holds no records")
    return records


def confusion_matrix(records: list[PredictionRecord]) -> np.ndarray:
    """2x2 counts[true][pred]; prediction is argmax with ties to the lower id."""
    if not records:
        raise ContractError("cannot build a confusion matrix from zero records")
    counts = np.zeros((2, 2), dtype=np.int64)
    for record in records:
        if not 0 <= record.true_label.value < 2:
            raise ContractError(f"record {record.sample_id!r} has non-binary label {record.true_label.value}")
        counts[record.true_label.value][record.predicted] += 1
    return counts


def accuracy(confusion: np.ndarray) -> float:
    """Diagonal mass over total."""
    confusion = np.asarray(confusion)
    total = int(confusion.sum())
    if total <= 0:
        raise ContractError("confusion matrix is empty")
    return float(np.trace(confusion)) / total


def cross_entropy(records: list[PredictionRecord]) -> float:
    """Mean -log(true-class probability) in nats, probabilities clipped at 1e-12."""
    if not records:
        raise ContractError("cannot compute a loss over zero records")
    p_true = np.array([record.probs[record.true_label.value] for record in records])
    return float(-np.log(np.clip(p_true, LOG_CLIP, 1.0)).mean())


@dataclass(frozen=True)
class ClassMisclassification:
    name: str
    label: int
    misclassified: int
    total: int

    @property
    def percent(self) -> str:
        return format_percent(self.misclassified, self.total)


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """Everything the harness reports for one (model, split) pair."""

    model_id: str
    split: str
    accuracy: float
    cross_entropy: float
    confusion: np.ndarray
    per_class: tuple[ClassMisclassification, ...]
    total_misclassified: int
    total_records: int

    def __post_init__(self):
        confusion = np.asarray(self.confusion, dtype=np.int64)
        confusion.flags.writeable = False
        object.__setattr__(self, "confusion", confusion)
        off_diag = int(confusion.sum() - np.trace(confusion))
        if off_diag != self.total_misclassified:
            raise ContractError(
                f"total_misclassified {self.total_misclassified} disagrees with confusion off-diagonal {off_diag}"
            )
        if int(confusion.sum()) != self.total_records:
            raise ContractError("confusion counts do not sum to the record count")
        if abs(self.accuracy - float(np.trace(confusion)) / self.total_records) > 1e-12:
            raise ContractError("accuracy field disagrees with trace/total of the confusion matrix")

    @property
    def accuracy_percent(self) -> str:
        correct = int(np.trace(self.confusion))
        return format_percent(correct, self.total_records)

    @property
    def total_misclassified_percent(self) -> str:
        return format_percent(self.total_misclassified, self.total_records)

    def to_json_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "split": self.split,
            "accuracy": self.accuracy,
            "accuracy_percent": self.accuracy_percent,
            "cross_entropy": self.cross_entropy,
            "confusion": self.confusion.tolist(),
            "per_class_misclassified": [
                {
                    "name": c.name,
                    "label": c.label,
                    "count": c.misclassified,
                    "total": c.total,
                    "percent": c.percent,
                }
                for c in self.per_class
            ],
            "total_misclassified": {
                "count": self.total_misclassified,
                "total": self.total_records,
                "percent": self.total_misclassified_percent,
            },
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "MetricsReport":
        return cls(
            model_id=str(obj["model_id"]),
            split=str(obj["split"]),
            accuracy=float(obj["accuracy"]),
            cross_entropy=float(obj["cross_entropy"]),
            confusion=np.asarray(obj["confusion"], dtype=np.int64),
            per_class=tuple(
                ClassMisclassification(
                    name=str(c["name"]), label=int(c["label"]), misclassified=int(c["count"]), total=int(c["total"])
                )
                for c in obj["per_class_misclassified"]
            ),
            total_misclassified=int(obj["total_misclassified"]["count"]),
            total_records=int(obj["total_misclassified"]["total"]),
        )

    def save(self, path) -> None:
        write_json(path, self.to_json_dict())

    @classmethod
    def load(cls, path) -> "MetricsReport":
        return cls.from_json_dict(read_json(path))

    def equivalent(self, other: "MetricsReport") -> bool:
        return (
            self.model_id == other.model_id
            and self.split == other.split
            and self.accuracy == other.accuracy
            and self.cross_entropy == other.cross_entropy
            and np.array_equal(self.confusion, other.confusion)
            and self.per_class == other.per_class
            and self.total_misclassified == other.total_misclassified
            and self.total_records == other.total_records
        )

    def render_text(self) -> str:
        """Aligned table: one row per class plus the overall row."""
        header = f"model {self.model_id}  split {self.split}"
        lines = [
            header,
            f"accuracy        {self.accuracy_percent}",
            f"cross-entropy   {self.cross_entropy:.5f} nats",
            "",
            f"{'class':<16} {'misclassified':>13} {'of':>6} {'rate':>8}",
        ]
        for c in self.per_class:
            lines.append(f"{c.name:<16} {c.misclassified:>13} {c.total:>6} {c.percent:>8}")
        lines.append(
            f"{'all':<16} {self.total_misclassified:>13} {self.total_records:>6} "
            f"{self.total_misclassified_percent:>8}"
        )
        return "\n".join(lines) + "\n"


def misclassification_report(
    records: list[PredictionRecord],
    manifest: DatasetManifest,
    model_id: str = "",
    split: str = "valid",
) -> MetricsReport:
    """Build the full report; every record's sample_id must exist in the manifest."""
    if not records:
        raise ContractError("cannot report on zero records")
    known = {path for path, _ in manifest.entries}
    unknown = sorted({r.sample_id for r in records} - known)
    if unknown:
        raise ContractError(f"sample ids missing from manifest: {unknown}")

    confusion = confusion_matrix(records)
    per_class = []
    for name, label in manifest.classes:
        class_records = [r for r in records if r.true_label.value == label]
        wrong = sum(1 for r in class_records if r.predicted != label)
        if class_records:
            per_class.append(
                ClassMisclassification(name=name, label=label, misclassified=wrong, total=len(class_records))
            )
    total_wrong = int(confusion.sum() - np.trace(confusion))

    # independent re-summation guards the aggregate against bookkeeping drift
    assert total_wrong == sum(c.misclassified for c in per_class)
    assert len(records) == int(confusion.sum())

    return MetricsReport(
        model_id=model_id,
        split=split,
        accuracy=accuracy(confusion),
        cross_entropy=cross_entropy(records),
        confusion=confusion,
        per_class=tuple(per_class),
        total_misclassified=total_wrong,
        total_records=len(records),
    )


def pointing_game(explanation: Explanation, truth: int) -> bool | None:
    """Did the top-ranked segment hit the known key segment?

    Returns None (indeterminate) for a degenerate explanation.
    """
    if explanation.degenerate or not explanation.selected:
        return None
    return explanation.selected[0] == truth


def deletion_curve(
    image: RasterImage,
    segment_map: SegmentMap,
    explanation: Explanation,
    model,
    steps: int,
) -> np.ndarray:
    """Target-class probability as the top segments are cumulatively removed.

    Step j masks the j highest-weighted segments (signed weight descending,
    ties toward the smaller id) with segment-mean fusion; entry 0 is the
    probability on the untouched image.
    """
    if steps < 0 or steps > segment_map.n_segments:
        raise ContractError(f"steps must lie in [0, {segment_map.n_segments}], got {steps}")
    weights = np.asarray(explanation.weights, dtype=np.float64)
    if weights.size != segment_map.n_segments:
        raise ContractError("explanation and segment map disagree on the segment count")
    order = sorted(range(weights.size), key=lambda s: (-weights[s], s))
    target = explanation.target_class.value
    policy = FusionPolicy(mode="segment-mean")
    means = segment_mean_colors(image, segment_map)

    curve = np.empty(steps + 1)
    mask = np.ones(segment_map.n_segments, dtype=np.uint8)
    curve[0] = model.predict_proba(image)[0][target]
    for j in range(1, steps + 1):
        mask[order[j - 1]] = 0
        masked = apply_mask(image, segment_map, mask, policy, mean_colors=means)
        curve[j] = model.predict_proba(masked)[0][target]
    return curve
