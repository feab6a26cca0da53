"""Seeded synthetic logits with controllable per-model skill.

Test scaffolding only: the generator reads ground-truth labels to decide
which class each model should favour. Nothing on the fusion or evaluation
path imports this module.

For each (video, model) a target class is chosen once; every view then gets
``margin * onehot(target) + noise_scale * N(0, 1)`` logits, with the margin
multiplied by ``error_margin_scale`` when the target is wrong.

Target selection by ``error_mode``:

* ``independent``: with probability ``skill`` the target is the label,
  otherwise a uniformly drawn class (which may coincide with the label).
* ``complementary``: videos are ranked by a seeded hash; model *k* is wrong
  exactly on the rank fraction ``[o_k, o_k + 1 - skill_k)`` where the
  offsets stack in model order, so no two models err on the same video.
  Wrong targets are drawn uniformly from the other classes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

from skatekit.errors import ConfigurationError
from skatekit.rng import SplitMix64, key_hash

ERROR_MODES = ("independent", "complementary")
LOGIT_DECIMALS = 6


@dataclass(frozen=True)
class MockPredictorSpec:
    seed: int = 0
    per_model_skill: Mapping[str, float] = field(default_factory=dict)
    noise_scale: float = 1.0
    margin: float = 4.0
    error_margin_scale: float = 1.0
    error_mode: str = "independent"

    def __post_init__(self):
        object.__setattr__(self, "per_model_skill", {str(k): float(v) for k, v in dict(self.per_model_skill).items()})
        if not self.per_model_skill:
            raise ConfigurationError("mock predictor needs at least one model")
        for m, s in self.per_model_skill.items():
            if not 0.0 <= s <= 1.0:
                raise ConfigurationError(f"skill for {m!r} must lie in [0, 1], got {s}")
        if not (math.isfinite(self.noise_scale) and self.noise_scale >= 0):
            raise ConfigurationError("noise_scale must be >= 0")
        if not (math.isfinite(self.margin) and self.margin > 0):
            raise ConfigurationError("margin must be > 0")
        if not (math.isfinite(self.error_margin_scale) and self.error_margin_scale > 0):
            raise ConfigurationError("error_margin_scale must be > 0")
        if self.error_mode not in ERROR_MODES:
            raise ConfigurationError(f"unknown error_mode {self.error_mode!r}")
        if self.error_mode == "complementary":
            total = sum(1.0 - s for s in self.per_model_skill.values())
            if total > 1.0 + 1e-12:
                raise ConfigurationError(
                    f"complementary errors need sum(1 - skill) <= 1, got {total:.4f}"
                )


def choose_targets(labels: Mapping[str, int], num_classes: int, spec: MockPredictorSpec) -> dict[tuple[str, str], int]:
    """Target class per (video, model)."""
    targets: dict[tuple[str, str], int] = {}
    videos = sorted(labels)
    if spec.error_mode == "independent":
        for vid in videos:
            for model, skill in spec.per_model_skill.items():
                rng = SplitMix64.for_key(spec.seed, "outcome", vid, model)
                if rng.random() < skill:
                    targets[vid, model] = labels[vid]
                else:
                    targets[vid, model] = rng.randbelow(num_classes)
        return targets

    ranked = sorted(videos, key=lambda v: (key_hash(spec.seed, "rank", v), v))
    n = len(ranked)
    rank = {vid: i for i, vid in enumerate(ranked)}
    offset = 0.0
    for model, skill in spec.per_model_skill.items():
        lo, hi = offset, offset + (1.0 - skill)
        offset = hi
        for vid in videos:
            label = labels[vid]
            r = rank[vid] / n
            if lo <= r < hi and num_classes > 1:
                rng = SplitMix64.for_key(spec.seed, "outcome", vid, model)
                targets[vid, model] = (label + 1 + rng.randbelow(num_classes - 1)) % num_classes
            else:
                targets[vid, model] = label
    return targets


def view_logits(spec: MockPredictorSpec, video_id: str, model_id: str, view_id: int,
                target: int, correct: bool, num_classes: int) -> list[float]:
    rng = SplitMix64.for_key(spec.seed, "view", video_id, model_id, view_id)
    margin = spec.margin if correct else spec.margin * spec.error_margin_scale
    out = []
    for c in range(num_classes):
        value = spec.noise_scale * rng.gauss() if spec.noise_scale else 0.0
        if c == target:
            value += margin
        out.append(round(value, LOGIT_DECIMALS) + 0.0)
    return out


def generate_logits(
    views: Mapping[str, Sequence[int]],
    labels: Mapping[str, int],
    num_classes: int,
    spec: MockPredictorSpec,
) -> Iterator[dict]:
    """Logits records for every (video, model, view), ordered video, model, view.

    ``views`` maps each video to its view ids (typically read from a TTA plan).
    """
    missing = sorted(v for v in views if v not in labels)
    if missing:
        raise ConfigurationError(f"mock predictor has no label for {len(missing)} video(s): {missing[:10]}")
    targets = choose_targets({v: labels[v] for v in views}, num_classes, spec)
    for vid in sorted(views):
        for model in spec.per_model_skill:
            target = targets[vid, model]
            correct = target == labels[vid]
            for view_id in sorted(views[vid]):
                yield {
                    "video_id": vid,
                    "model_id": model,
                    "view_id": view_id,
                    "logits": view_logits(spec, vid, model, view_id, target, correct, num_classes),
                }
