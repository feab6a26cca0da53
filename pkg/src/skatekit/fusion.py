"""Softmax, TTA view fusion, UMT variant aggregation and the two model ensembles."""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from skatekit.errors import ConfigurationError, FusionInputError, ParseError
from skatekit.jsonl import parse_lines

STRATEGIES = ("vote", "weighted")
VIEW_FUSION_MODES = ("prob_mean", "logit_mean")
UMT_AGGREGATION_MODES = ("sum_softmax", "mean")


@dataclass(frozen=True)
class LogitsRecord:
    video_id: str
    model_id: str
    view_id: int
    logits: tuple[float, ...]


@dataclass(frozen=True)
class EnsembleConfig:
    strategy: str
    model_order: tuple[str, ...]
    tiebreak_model: str
    raw_weights: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "model_order", tuple(self.model_order))
        object.__setattr__(self, "raw_weights", tuple(float(w) for w in self.raw_weights))
        if self.strategy not in STRATEGIES:
            raise ConfigurationError(f"unknown ensemble strategy {self.strategy!r}")
        if not self.model_order:
            raise ConfigurationError("model_order must name at least one model")
        if len(set(self.model_order)) != len(self.model_order):
            raise ConfigurationError(f"duplicate model in model_order {self.model_order}")
        if self.tiebreak_model not in self.model_order:
            raise ConfigurationError(f"tiebreak_model {self.tiebreak_model!r} not in model_order")
        if self.strategy == "weighted":
            if len(self.raw_weights) != len(self.model_order):
                raise ConfigurationError(
                    f"{len(self.raw_weights)} raw_weights for {len(self.model_order)} models"
                )
            if not all(math.isfinite(w) for w in self.raw_weights):
                raise ConfigurationError("raw_weights must be finite")

    @classmethod
    def single(cls, model_id: str) -> "EnsembleConfig":
        return cls("weighted", (model_id,), model_id, (0.0,))


@dataclass(frozen=True)
class FusionConfig:
    ensemble: EnsembleConfig
    umt_variant_groups: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    view_fusion: str = "prob_mean"
    umt_aggregation: str = "sum_softmax"
    expected_views: int = 15

    def __post_init__(self):
        groups = {str(k): tuple(v) for k, v in dict(self.umt_variant_groups).items()}
        object.__setattr__(self, "umt_variant_groups", groups)
        if self.view_fusion not in VIEW_FUSION_MODES:
            raise ConfigurationError(f"unknown view_fusion {self.view_fusion!r}")
        if self.umt_aggregation not in UMT_AGGREGATION_MODES:
            raise ConfigurationError(f"unknown umt_aggregation {self.umt_aggregation!r}")
        if self.expected_views < 1:
            raise ConfigurationError("expected_views must be >= 1")
        for name, members in groups.items():
            if not members:
                raise ConfigurationError(f"variant group {name!r} is empty")
        leaves = self.leaf_models()
        if len(set(leaves)) != len(leaves):
            raise ConfigurationError(f"a model appears in more than one place: {leaves}")

    def members(self, model_id: str) -> tuple[str, ...]:
        return self.umt_variant_groups.get(model_id, (model_id,))

    def leaf_models(self) -> tuple[str, ...]:
        """Model ids that must be present in the logits input, in config order."""
        return tuple(leaf for m in self.ensemble.model_order for leaf in self.members(m))


@dataclass(frozen=True)
class Prediction:
    video_id: str
    pred_class: int
    pred_name: str
    probs: tuple[float, ...]

    def to_record(self) -> dict:
        return {
            "video_id": self.video_id,
            "pred_class": self.pred_class,
            "pred_name": self.pred_name,
            "probs": list(self.probs),
        }


def _as_vector(values, what: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{what} must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")
    return arr


def softmax(logits: Sequence[float]) -> np.ndarray:
    """Max-shifted softmax over a 1-D vector."""
    x = _as_vector(logits, "logits")
    e = np.exp(x - x.max())
    return e / e.sum()


def _stack(vectors: Sequence, what: str) -> np.ndarray:
    if len(vectors) == 0:
        raise ValueError(f"no {what} to fuse")
    arrs = [_as_vector(v, what) for v in vectors]
    if len({a.size for a in arrs}) != 1:
        raise ValueError(f"{what} have inconsistent lengths {sorted({a.size for a in arrs})}")
    return np.stack(arrs)


def fuse_views(views: Sequence[Sequence[float]]) -> np.ndarray:
    """Per-class arithmetic mean of view probabilities."""
    return _stack(views, "views").mean(axis=0)


def aggregate_umt_variants(
    variants: Sequence[Sequence[float]],
    expected: int = 3,
    mode: str = "sum_softmax",
) -> np.ndarray:
    """Combine the multi-resolution fine-tunes of one model family.

    ``sum_softmax`` sums the variant probabilities and applies softmax to
    the sum; ``mean`` is a plain average.
    """
    if len(variants) != expected:
        raise ValueError(f"expected {expected} variants, got {len(variants)}")
    stacked = _stack(variants, "variants")
    if mode == "sum_softmax":
        return softmax(stacked.sum(axis=0))
    if mode == "mean":
        return stacked.mean(axis=0)
    raise ValueError(f"unknown aggregation mode {mode!r}")


def ensemble_vote(per_model_top1: Mapping[str, int], config: EnsembleConfig) -> int:
    """Plurality vote; any tie for first place defers to ``config.tiebreak_model``."""
    for m in config.model_order:
        if m not in per_model_top1:
            raise FusionInputError(f"missing prediction for model {m!r}", [{"model_id": m}])
    counts = Counter(per_model_top1[m] for m in config.model_order)
    (best, n_best), *rest = counts.most_common()
    if rest and rest[0][1] == n_best:
        return per_model_top1[config.tiebreak_model]
    return best


def ensemble_weights(raw_weights: Sequence[float]) -> np.ndarray:
    return softmax(raw_weights)


def ensemble_weighted(
    per_model_probs: Mapping[str, Sequence[float]],
    config: EnsembleConfig,
) -> tuple[int, np.ndarray]:
    """Softmax-weighted convex combination of per-model probabilities.

    Returns the argmax (lowest index wins ties) and the fused vector.
    """
    missing = [m for m in config.model_order if m not in per_model_probs]
    if missing:
        raise FusionInputError(
            f"missing probabilities for model(s) {', '.join(missing)}",
            [{"model_id": m} for m in missing],
        )
    if len(config.raw_weights) != len(config.model_order):
        raise ConfigurationError("raw_weights do not align with model_order")
    stacked = _stack([per_model_probs[m] for m in config.model_order], "model probabilities")
    w = ensemble_weights(config.raw_weights)
    fused = w @ stacked
    return int(np.argmax(fused)), fused


def parse_logits(lines: Iterable[str], source: str | None = None) -> Iterable[LogitsRecord]:
    for lineno, rec in parse_lines(lines, source):
        try:
            vid, mid, view, logits = rec["video_id"], rec["model_id"], rec["view_id"], rec["logits"]
        except KeyError as exc:
            raise ParseError(f"missing field {exc.args[0]!r}", lineno, source) from None
        if not isinstance(vid, str) or not isinstance(mid, str):
            raise ParseError("video_id and model_id must be strings", lineno, source)
        if not isinstance(view, int) or isinstance(view, bool) or view < 0:
            raise ParseError(f"view_id must be a non-negative integer, got {view!r}", lineno, source)
        if not isinstance(logits, list) or not logits or not all(
            isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) for x in logits
        ):
            raise ParseError("logits must be a non-empty list of finite numbers", lineno, source)
        yield LogitsRecord(vid, mid, view, tuple(float(x) for x in logits))


def _model_probs(views: Sequence[Sequence[float]], mode: str) -> np.ndarray:
    if mode == "logit_mean":
        return softmax(_stack(views, "views").mean(axis=0))
    return fuse_views([softmax(v) for v in views])


def fuse_video(
    video_id: str,
    logits_by_model: Mapping[str, Mapping[int, Sequence[float]]],
    class_names: Sequence[str],
    config: FusionConfig,
) -> Prediction:
    """Full fusion chain for one video whose logits are already grouped and complete."""
    per_model: dict[str, np.ndarray] = {}
    for m in config.ensemble.model_order:
        members = config.members(m)
        leaf_probs = []
        for leaf in members:
            views = logits_by_model[leaf]
            leaf_probs.append(_model_probs([views[v] for v in sorted(views)], config.view_fusion))
        if m in config.umt_variant_groups:
            per_model[m] = aggregate_umt_variants(leaf_probs, len(members), config.umt_aggregation)
        else:
            per_model[m] = leaf_probs[0]

    ens = config.ensemble
    if ens.strategy == "weighted":
        pred, probs = ensemble_weighted(per_model, ens)
    else:
        top1 = {m: int(np.argmax(p)) for m, p in per_model.items()}
        pred = ensemble_vote(top1, ens)
        probs = np.stack([per_model[m] for m in ens.model_order]).mean(axis=0)
    return Prediction(video_id, pred, class_names[pred], tuple(float(p) for p in probs))


def _fuse_video_args(args) -> Prediction:
    return fuse_video(*args)


def group_logits(
    records: Iterable[LogitsRecord],
    num_classes: int,
    config: FusionConfig,
) -> dict[str, dict[str, dict[int, tuple[float, ...]]]]:
    """Index logits as video -> leaf model -> view, validating completeness.

    Records for models outside the configuration are ignored.
    """
    leaves = set(config.leaf_models())
    grouped: dict[str, dict[str, dict[int, tuple[float, ...]]]] = {}
    problems: list[dict] = []
    for r in records:
        if len(r.logits) != num_classes:
            problems.append({
                "video_id": r.video_id, "model_id": r.model_id, "view_id": r.view_id,
                "error": f"expected {num_classes} logits, got {len(r.logits)}",
            })
            continue
        if r.model_id not in leaves:
            grouped.setdefault(r.video_id, {})
            continue
        views = grouped.setdefault(r.video_id, {}).setdefault(r.model_id, {})
        if r.view_id in views:
            problems.append({
                "video_id": r.video_id, "model_id": r.model_id, "view_id": r.view_id,
                "error": "duplicate record",
            })
            continue
        views[r.view_id] = r.logits

    expected = set(range(config.expected_views))
    for vid in sorted(grouped):
        for leaf in config.leaf_models():
            have = set(grouped[vid].get(leaf, {}))
            missing = sorted(expected - have)
            extra = sorted(have - expected)
            if missing:
                problems.append({"video_id": vid, "model_id": leaf, "missing_views": missing})
            if extra:
                problems.append({"video_id": vid, "model_id": leaf, "unexpected_views": extra})
    if problems:
        raise FusionInputError(f"{len(problems)} problem(s) in logits input", problems)
    return grouped


def run_fusion(
    records: Iterable[LogitsRecord],
    class_names: Sequence[str],
    config: FusionConfig,
    jobs: int = 1,
) -> list[Prediction]:
    """Per-video predictions sorted by video_id; independent of record order."""
    grouped = group_logits(records, len(class_names), config)
    tasks = [(vid, grouped[vid], tuple(class_names), config) for vid in sorted(grouped)]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_fuse_video_args, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    return [fuse_video(*t) for t in tasks]
