"""Mean per-class accuracy and leaderboard-style reporting."""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Iterable, Mapping, Sequence

from skatekit.errors import EvaluationError, ParseError

REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["num_classes", "num_samples", "mean", "overall_top1", "per_class", "warnings"],
    "properties": {
        "num_classes": {"type": "integer", "minimum": 1},
        "num_samples": {"type": "integer", "minimum": 1},
        "mean": {"type": "number", "minimum": 0, "maximum": 1},
        "overall_top1": {"type": "number", "minimum": 0, "maximum": 1},
        "per_class": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["class_index", "class_name", "n", "m", "accuracy"],
                "properties": {
                    "class_index": {"type": "integer", "minimum": 0},
                    "class_name": {"type": ["string", "null"]},
                    "n": {"type": "integer", "minimum": 0},
                    "m": {"type": "integer", "minimum": 0},
                    "accuracy": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
                },
            },
        },
        "warnings": {
            "type": "object",
            "required": ["extra_predictions", "empty_classes"],
            "properties": {
                "extra_predictions": {"type": "integer", "minimum": 0},
                "empty_classes": {"type": "array", "items": {"type": "integer"}},
            },
        },
    },
}


@dataclass(frozen=True)
class LabelSet:
    entries: Mapping[str, int]
    num_classes: int

    def __post_init__(self):
        if self.num_classes < 1:
            raise EvaluationError("num_classes must be positive")
        bad = sorted(v for v, c in self.entries.items() if not 0 <= c < self.num_classes)
        if bad:
            raise EvaluationError(f"label class out of range for {len(bad)} video(s)", bad)


@dataclass(frozen=True)
class ClassAccuracy:
    class_index: int
    n: int
    m: int

    @property
    def accuracy(self) -> float | None:
        return self.m / self.n if self.n else None


@dataclass(frozen=True)
class EvaluationReport:
    per_class: tuple[ClassAccuracy, ...]
    mean: float
    overall_top1: float
    extra_predictions: int = 0

    @property
    def num_samples(self) -> int:
        return sum(c.n for c in self.per_class)

    @property
    def empty_classes(self) -> list[int]:
        return [c.class_index for c in self.per_class if c.n == 0]

    def to_dict(self, class_names: Sequence[str] | None = None) -> dict:
        return {
            "num_classes": len(self.per_class),
            "num_samples": self.num_samples,
            "mean": self.mean,
            "overall_top1": self.overall_top1,
            "per_class": [
                {
                    "class_index": c.class_index,
                    "class_name": class_names[c.class_index] if class_names else None,
                    "n": c.n,
                    "m": c.m,
                    "accuracy": c.accuracy,
                }
                for c in self.per_class
            ],
            "warnings": {
                "extra_predictions": self.extra_predictions,
                "empty_classes": self.empty_classes,
            },
        }


def mean_class_accuracy(
    predictions: Mapping[str, int],
    labels: LabelSet,
    strict_classes: bool = False,
) -> EvaluationReport:
    """Average of per-class top-1 accuracy over the classes that have samples.

    With ``strict_classes`` a class without samples is an error instead of
    being left out of the average.
    """
    if not labels.entries:
        raise EvaluationError("label set is empty")
    missing = sorted(v for v in labels.entries if v not in predictions)
    if missing:
        raise EvaluationError(f"{len(missing)} labeled video(s) have no prediction", missing)
    out_of_range = sorted(
        v for v, c in predictions.items() if v in labels.entries and not 0 <= c < labels.num_classes
    )
    if out_of_range:
        raise EvaluationError(f"predicted class out of range for {len(out_of_range)} video(s)", out_of_range)

    n = [0] * labels.num_classes
    m = [0] * labels.num_classes
    for vid, truth in labels.entries.items():
        n[truth] += 1
        if predictions[vid] == truth:
            m[truth] += 1

    empty = [i for i, count in enumerate(n) if count == 0]
    if strict_classes and empty:
        raise EvaluationError(f"classes without samples: {empty}")

    present = [i for i in range(labels.num_classes) if n[i]]
    mean = sum(m[i] / n[i] for i in present) / len(present)
    extra = sum(1 for v in predictions if v not in labels.entries)
    return EvaluationReport(
        per_class=tuple(ClassAccuracy(i, n[i], m[i]) for i in range(labels.num_classes)),
        mean=mean,
        overall_top1=sum(m) / sum(n),
        extra_predictions=extra,
    )


def format_percent(mean: float) -> str:
    """Mean as a percentage with two decimals, halves rounded up."""
    value = Decimal(repr(mean)) * 100
    return str(value.quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass
class LeaderboardTable:
    rows: list[tuple[str, str]] = field(default_factory=list)

    def to_text(self, header: tuple[str, str] = ("Method", "Online Score")) -> str:
        width = max(len(header[0]), *(len(name) for name, _ in self.rows))
        score_w = max(len(header[1]), *(len(s) for _, s in self.rows))
        rule = "-" * (width + 2 + score_w)
        lines = [rule, f"{header[0]:<{width}}  {header[1]:>{score_w}}", rule]
        lines += [f"{name:<{width}}  {score:>{score_w}}" for name, score in self.rows]
        lines.append(rule)
        return "\n".join(lines) + "\n"

    def to_records(self) -> list[dict]:
        return [{"method": name, "score": score} for name, score in self.rows]


def leaderboard_table(reports: Mapping[str, EvaluationReport]) -> LeaderboardTable:
    return LeaderboardTable([(name, format_percent(r.mean)) for name, r in reports.items()])


_SPLIT = re.compile(r"[,\t ]+")


def parse_labels(
    lines: Iterable[str],
    class_names: Sequence[str],
    source: str | None = None,
) -> LabelSet:
    """Read ``video_id class`` pairs; the class is an index or a class-map name."""
    by_name = {name: i for i, name in enumerate(class_names)}
    entries: dict[str, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = _SPLIT.split(line)
        if len(parts) != 2:
            raise ParseError("expected two columns: video_id and class", lineno, source)
        vid, cls = parts
        if cls in by_name:
            idx = by_name[cls]
        elif cls.isdigit():
            idx = int(cls)
            if idx >= len(class_names):
                raise ParseError(f"class index {idx} out of range", lineno, source)
        else:
            raise ParseError(f"unknown class {cls!r}", lineno, source)
        if vid in entries:
            raise ParseError(f"duplicate label for video {vid!r}", lineno, source)
        entries[vid] = idx
    return LabelSet(entries, len(class_names))


def read_class_map(lines: Iterable[str], source: str | None = None) -> list[str]:
    names = [line.strip() for line in lines]
    while names and not names[-1]:
        names.pop()
    if not names:
        raise ParseError("class map is empty", source=source)
    for lineno, name in enumerate(names, start=1):
        if not name:
            raise ParseError("blank class name", lineno, source)
    if len(set(names)) != len(names):
        raise ParseError("duplicate class names", source=source)
    return names
