"""Pipeline configuration loaded from a YAML (or JSON) file.

Relative paths resolve against the config file's directory. The output
directory can be overridden with the ``SKATEKIT_OUTPUT_DIR`` environment
variable.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

import yaml

from skatekit.errors import ConfigurationError
from skatekit.fusion import EnsembleConfig, FusionConfig
from skatekit.mock import MockPredictorSpec
from skatekit.tta import TtaConfig

OUTPUT_DIR_ENV = "SKATEKIT_OUTPUT_DIR"

CROP_PLAN_FILE = "crop_plan.jsonl"
TTA_PLAN_FILE = "tta_plan.jsonl"
LOGITS_FILE = "logits.jsonl"
PREDICTIONS_FILE = "predictions.jsonl"
REPORT_FILE = "report.json"
LEADERBOARD_JSON = "leaderboard.json"
LEADERBOARD_TXT = "leaderboard.txt"


@dataclass(frozen=True)
class RoiConfig:
    score_threshold: float = 0.0
    pad_fraction: float = 0.0
    fallback_full_frame: bool = False

    def __post_init__(self):
        if not 0.0 <= self.score_threshold <= 1.0:
            raise ConfigurationError("roi.score_threshold must lie in [0, 1]")
        if self.pad_fraction < 0:
            raise ConfigurationError("roi.pad_fraction must be >= 0")


@dataclass(frozen=True)
class Paths:
    output_dir: Path
    detections: Path | None = None
    manifest: Path | None = None
    class_map: Path | None = None
    labels: Path | None = None
    logits: Path | None = None

    def out(self, name: str) -> Path:
        return self.output_dir / name

    @property
    def logits_file(self) -> Path:
        return self.logits or self.out(LOGITS_FILE)

    def require(self, name: str) -> Path:
        value = getattr(self, name)
        if value is None:
            raise ConfigurationError(f"paths.{name} is not configured")
        return value


@dataclass(frozen=True)
class PipelineConfig:
    paths: Paths
    roi: RoiConfig = field(default_factory=RoiConfig)
    tta: TtaConfig = field(default_factory=TtaConfig)
    fusion: FusionConfig | None = None
    mock: MockPredictorSpec | None = None
    jobs: int = 1


def _section(raw: dict, name: str) -> dict:
    value = raw.get(name)
    if value is None:
        return {}
    if not isinstance(value, dict):
        raise ConfigurationError(f"config section {name!r} must be a mapping")
    return value


def _build(cls, data: dict, section: str):
    try:
        return cls(**data)
    except TypeError as exc:
        raise ConfigurationError(f"invalid {section} section: {exc}") from None


def parse_config(raw: dict, base_dir: Path, env: dict | None = None) -> PipelineConfig:
    env = os.environ if env is None else env
    if not isinstance(raw, dict):
        raise ConfigurationError("config must be a mapping")

    p = _section(raw, "paths")

    def resolve(key):
        value = p.get(key)
        return None if value in (None, "") else (base_dir / str(value)).resolve()

    out_dir = env.get(OUTPUT_DIR_ENV) or p.get("output_dir") or "out"
    paths = Paths(
        output_dir=(base_dir / str(out_dir)).resolve(),
        detections=resolve("detections"),
        manifest=resolve("manifest"),
        class_map=resolve("class_map"),
        labels=resolve("labels"),
        logits=resolve("logits"),
    )

    roi = _build(RoiConfig, _section(raw, "roi"), "roi")
    tta = _build(TtaConfig, _section(raw, "tta"), "tta")

    fusion = None
    ens = dict(_section(raw, "ensemble"))
    if ens:
        fusion_keys = ("umt_variant_groups", "view_fusion", "umt_aggregation")
        fusion_kwargs = {k: ens.pop(k) for k in fusion_keys if k in ens}
        ens.setdefault("strategy", "weighted")
        if ens.get("model_order") and "tiebreak_model" not in ens:
            ens["tiebreak_model"] = ens["model_order"][0]
        ensemble = _build(EnsembleConfig, ens, "ensemble")
        fusion = _build(
            FusionConfig,
            {"ensemble": ensemble, "expected_views": tta.num_views, **fusion_kwargs},
            "ensemble",
        )

    mock = None
    if raw.get("mock"):
        mock = _build(MockPredictorSpec, _section(raw, "mock"), "mock")

    jobs = raw.get("jobs", 1)
    if not isinstance(jobs, int) or jobs < 1:
        raise ConfigurationError("jobs must be a positive integer")
    return PipelineConfig(paths, roi, tta, fusion, mock, jobs)


def load_config(path: str | os.PathLike, env: dict | None = None) -> PipelineConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            raw = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
    return parse_config(raw or {}, path.parent, env)


def with_tta(config: PipelineConfig, **overrides) -> PipelineConfig:
    """Copy with TTA overrides applied; the fusion view count follows."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    if not changes:
        return config
    tta = replace(config.tta, **changes)
    fusion = config.fusion and replace(config.fusion, expected_views=tta.num_views)
    return replace(config, tta=tta, fusion=fusion)
