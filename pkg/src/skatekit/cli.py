"""Command line entry point: ``skatekit <subcommand> --config pipeline.yaml``.

Exit codes: 0 success, 1 validation failure, 2 I/O failure. Failures are
reported on stderr as a single JSON object with an ``errors`` list.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from skatekit import config as cfg
from skatekit.errors import ConfigurationError, FusionInputError, NoDetections, ParseError, SkateKitError
from skatekit.fusion import EnsembleConfig, FusionConfig, Prediction, parse_logits, run_fusion
from skatekit.jsonl import atomic_write_text, dumps, read_jsonl, write_jsonl
from skatekit.metrics import (
    EvaluationReport,
    leaderboard_table,
    mean_class_accuracy,
    parse_labels,
    read_class_map,
)
from skatekit.mock import generate_logits
from skatekit.roi import CropSpec, DetectionTrack, ingest_detections, load_manifest, plan_crop
from skatekit.synth import make_demo_dataset
from skatekit.tta import build_tta_plan

log = logging.getLogger("skatekit")

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 1, 2

VOTE_NAME = "Model Voter"
WEIGHTED_NAME = "Model Weighted Summation"


class StageFailure(SkateKitError):
    """Several per-video errors gathered by one stage."""

    def __init__(self, message: str, errors: list[dict]):
        self.errors = errors
        super().__init__(message)


def _load_manifest(conf: cfg.PipelineConfig):
    path = conf.paths.require("manifest")
    with open(path, encoding="utf-8") as fh:
        return load_manifest(fh, str(path))


def _load_class_names(conf: cfg.PipelineConfig) -> list[str]:
    path = conf.paths.require("class_map")
    with open(path, encoding="utf-8") as fh:
        return read_class_map(fh, str(path))


def _load_labels(conf: cfg.PipelineConfig, class_names):
    path = conf.paths.require("labels")
    with open(path, encoding="utf-8") as fh:
        return parse_labels(fh, class_names, str(path))


def _plan_one(args: tuple[DetectionTrack, cfg.RoiConfig]):
    track, roi = args
    try:
        return plan_crop(track, roi.score_threshold, roi.pad_fraction, roi.fallback_full_frame)
    except NoDetections as exc:
        return exc


def cmd_crop_plan(conf: cfg.PipelineConfig, strict: bool = False) -> dict:
    videos = _load_manifest(conf)
    det_path = conf.paths.require("detections")
    with open(det_path, encoding="utf-8") as fh:
        ingested = ingest_detections(fh, videos, strict=strict, source=str(det_path))

    tasks = [(t, conf.roi) for t in ingested.tracks]
    if conf.jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=conf.jobs) as pool:
            results = list(pool.map(_plan_one, tasks, chunksize=max(1, len(tasks) // (4 * conf.jobs))))
    else:
        results = [_plan_one(t) for t in tasks]

    if ingested.dropped_degenerate:
        log.warning("dropped %d box(es) left empty after clamping", ingested.dropped_degenerate)
    for err in ingested.invalid_records:
        log.warning("skipped invalid detection: %s", err)
    failures = [r.to_dict() for r in results if isinstance(r, NoDetections)]
    if failures:
        raise StageFailure(f"{len(failures)} video(s) without usable detections", failures)
    out = conf.paths.out(cfg.CROP_PLAN_FILE)
    write_jsonl(out, (spec.to_record() for spec in results))
    return {
        "stage": "crop-plan",
        "videos": len(results),
        "dropped_degenerate": ingested.dropped_degenerate,
        "invalid_records": len(ingested.invalid_records),
        "output": str(out),
    }


def read_crop_plan(path: Path) -> dict[str, CropSpec]:
    specs = {}
    for rec in read_jsonl(path):
        spec = CropSpec.from_record(rec)
        specs[spec.video_id] = spec
    return specs


def cmd_tta_plan(conf: cfg.PipelineConfig, strict: bool = False) -> dict:
    videos = _load_manifest(conf)
    plan_path = conf.paths.out(cfg.CROP_PLAN_FILE)
    if not plan_path.exists():
        cmd_crop_plan(conf, strict)
    specs = read_crop_plan(plan_path)

    records, errors = [], []
    for vid in sorted(videos):
        if vid not in specs:
            errors.append({"type": "ConfigurationError", "video_id": vid, "message": "no crop plan entry"})
            continue
        try:
            plan = build_tta_plan(videos[vid], specs[vid], conf.tta)
        except SkateKitError as exc:
            errors.append({**exc.to_dict(), "video_id": vid})
            continue
        records.extend(plan.to_records())
    if errors:
        raise StageFailure(f"{len(errors)} video(s) could not be planned", errors)
    out = conf.paths.out(cfg.TTA_PLAN_FILE)
    write_jsonl(out, records)
    return {"stage": "tta-plan", "videos": len(videos), "views": len(records), "output": str(out)}


def cmd_mock_predict(conf: cfg.PipelineConfig, seed: int | None = None) -> dict:
    if conf.mock is None:
        raise ConfigurationError("config has no mock section")
    spec = conf.mock if seed is None else replace(conf.mock, seed=seed)
    names = _load_class_names(conf)
    labels = _load_labels(conf, names)
    plan_path = conf.paths.out(cfg.TTA_PLAN_FILE)
    views: dict[str, list[int]] = {}
    for rec in read_jsonl(plan_path):
        vid, view_id = rec.get("video_id"), rec.get("view_id")
        if not isinstance(vid, str) or not isinstance(view_id, int):
            raise ParseError(f"malformed TTA plan record {rec}", source=str(plan_path))
        views.setdefault(vid, []).append(view_id)
    out = conf.paths.logits_file
    n = write_jsonl(out, generate_logits(views, labels.entries, len(names), spec))
    return {"stage": "mock-predict", "records": n, "output": str(out)}


def restrict_fusion(fusion: FusionConfig, models: Sequence[str] | None = None,
                    strategy: str | None = None) -> FusionConfig:
    """Fusion config narrowed to ``models`` and/or switched to ``strategy``."""
    ens = fusion.ensemble
    if models:
        unknown = [m for m in models if m not in ens.model_order]
        if unknown:
            raise ConfigurationError(f"model(s) not in model_order: {unknown}")
        if len(models) == 1:
            ens = EnsembleConfig.single(models[0])
        else:
            weights = ()
            if ens.raw_weights:
                lookup = dict(zip(ens.model_order, ens.raw_weights))
                weights = tuple(lookup[m] for m in models)
            tiebreak = ens.tiebreak_model if ens.tiebreak_model in models else models[0]
            ens = EnsembleConfig(ens.strategy, tuple(models), tiebreak, weights)
    if strategy and len(ens.model_order) > 1:
        ens = replace(ens, strategy=strategy)
    groups = {k: v for k, v in fusion.umt_variant_groups.items() if k in ens.model_order}
    return replace(fusion, ensemble=ens, umt_variant_groups=groups)


def _fuse(conf: cfg.PipelineConfig, fusion: FusionConfig, names: list[str]) -> list[Prediction]:
    path = conf.paths.logits_file
    with open(path, encoding="utf-8") as fh:
        return run_fusion(parse_logits(fh, str(path)), names, fusion, jobs=conf.jobs)


def cmd_fuse(conf: cfg.PipelineConfig, strategy: str | None = None, models: Sequence[str] | None = None,
             output: Path | None = None) -> dict:
    if conf.fusion is None:
        raise ConfigurationError("config has no ensemble section")
    fusion = restrict_fusion(conf.fusion, models, strategy)
    names = _load_class_names(conf)
    preds = _fuse(conf, fusion, names)
    out = output or conf.paths.out(cfg.PREDICTIONS_FILE)
    write_jsonl(out, (p.to_record() for p in preds))
    return {"stage": "fuse", "strategy": fusion.ensemble.strategy,
            "models": list(fusion.ensemble.model_order), "videos": len(preds), "output": str(out)}


def read_predictions(path: Path) -> dict[str, int]:
    preds: dict[str, int] = {}
    for rec in read_jsonl(path):
        vid, cls = rec.get("video_id"), rec.get("pred_class")
        if not isinstance(vid, str) or not isinstance(cls, int) or isinstance(cls, bool):
            raise ConfigurationError(f"{path}: malformed prediction record {rec}")
        if vid in preds:
            raise ConfigurationError(f"{path}: duplicate prediction for {vid!r}")
        preds[vid] = cls
    return preds


def cmd_evaluate(conf: cfg.PipelineConfig, predictions: dict[str, Path] | None = None,
                 strict: bool = False, stream=None, primary: str | None = None) -> dict[str, EvaluationReport]:
    """Score each predictions file; ``report.json`` describes ``primary`` (default: the first)."""
    names = _load_class_names(conf)
    labels = _load_labels(conf, names)
    if not predictions:
        strategy = conf.fusion.ensemble.strategy if conf.fusion else "predictions"
        predictions = {strategy: conf.paths.out(cfg.PREDICTIONS_FILE)}

    reports = {
        name: mean_class_accuracy(read_predictions(path), labels, strict)
        for name, path in predictions.items()
    }
    main_report = reports[primary] if primary else next(iter(reports.values()))
    atomic_write_text(conf.paths.out(cfg.REPORT_FILE), json.dumps(main_report.to_dict(names), indent=2) + "\n")
    table = leaderboard_table(reports)
    atomic_write_text(conf.paths.out(cfg.LEADERBOARD_TXT), table.to_text())
    atomic_write_text(conf.paths.out(cfg.LEADERBOARD_JSON), json.dumps(table.to_records(), indent=2) + "\n")
    (stream or sys.stdout).write(table.to_text())
    return reports


def cmd_run_all(conf: cfg.PipelineConfig, strict: bool = False, seed: int | None = None, stream=None) -> dict:
    if conf.fusion is None:
        raise ConfigurationError("config has no ensemble section")
    summaries = [cmd_crop_plan(conf, strict), cmd_tta_plan(conf, strict)]
    if conf.mock is not None:
        summaries.append(cmd_mock_predict(conf, seed))

    ens = conf.fusion.ensemble
    runs: dict[str, Path] = {}
    if len(ens.model_order) > 1:
        for m in ens.model_order:
            path = conf.paths.out(f"predictions_{m}.jsonl")
            summaries.append(cmd_fuse(conf, models=[m], output=path))
            runs[m] = path
        path = conf.paths.out("predictions_vote.jsonl")
        summaries.append(cmd_fuse(conf, strategy="vote", output=path))
        runs[VOTE_NAME] = path
        if len(ens.raw_weights) == len(ens.model_order):
            path = conf.paths.out("predictions_weighted.jsonl")
            summaries.append(cmd_fuse(conf, strategy="weighted", output=path))
            runs[WEIGHTED_NAME] = path

    summaries.append(cmd_fuse(conf))
    configured = WEIGHTED_NAME if ens.strategy == "weighted" else VOTE_NAME
    if len(ens.model_order) == 1:
        configured = ens.model_order[0]
    runs[configured] = conf.paths.out(cfg.PREDICTIONS_FILE)
    reports = cmd_evaluate(conf, runs, strict, stream, primary=configured)
    return {"stages": summaries, "means": {k: r.mean for k, r in reports.items()}}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="pipeline config file (YAML or JSON)")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="override the mock predictor seed")
    common.add_argument("--strict", action="store_true", default=argparse.SUPPRESS,
                        help="fail on invalid detection records and on classes without samples")
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS, help="worker processes per stage")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="skatekit", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("crop-plan", parents=[common], help="consolidate detections into one crop per video")

    p = sub.add_parser("tta-plan", parents=[common], help="emit the temporal x spatial view plan")
    p.add_argument("--clip-len", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--temporal-views", type=int)
    p.add_argument("--spatial-views", type=int)

    sub.add_parser("mock-predict", parents=[common], help="write seeded synthetic logits for the TTA plan")

    p = sub.add_parser("fuse", parents=[common], help="fuse logits and apply the configured ensemble")
    p.add_argument("--strategy", choices=("vote", "weighted"))
    p.add_argument("--models", help="comma-separated subset of model_order")
    p.add_argument("--output", type=Path)

    p = sub.add_parser("evaluate", parents=[common], help="mean per-class accuracy and leaderboard table")
    p.add_argument("--predictions", action="append", metavar="NAME=PATH",
                   help="predictions file to score; repeatable (default: configured predictions file)")

    p = sub.add_parser("run-all", parents=[common], help="run every stage in order")
    p.add_argument("--clip-len", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--temporal-views", type=int)
    p.add_argument("--spatial-views", type=int)

    p = sub.add_parser("demo-fixture", help="write a synthetic demo dataset and config")
    p.add_argument("directory", type=Path)
    p.add_argument("--videos", type=int, default=500)
    p.add_argument("--classes", type=int, default=28)
    p.add_argument("--seed", type=int, default=0)
    return parser


def _parse_named_paths(items: list[str] | None) -> dict[str, Path] | None:
    if not items:
        return None
    out = {}
    for item in items:
        name, sep, path = item.partition("=")
        if not sep:
            name, path = Path(item).stem, item
        out[name] = Path(path)
    return out


def _run(args: argparse.Namespace) -> None:
    if args.command == "demo-fixture":
        path = make_demo_dataset(args.directory, args.videos, args.classes, args.seed)
        print(dumps({"stage": "demo-fixture", "config": str(path)}))
        return

    config_path = getattr(args, "config", None)
    if not config_path:
        raise ConfigurationError("--config is required")
    conf = cfg.load_config(config_path)
    if getattr(args, "jobs", None):
        conf = replace(conf, jobs=args.jobs)
    strict = getattr(args, "strict", False)
    seed = getattr(args, "seed", None)
    if args.command in ("tta-plan", "run-all"):
        conf = cfg.with_tta(conf, clip_len=args.clip_len, stride=args.stride,
                            temporal_views=args.temporal_views, spatial_views=args.spatial_views)

    if args.command == "crop-plan":
        summary = cmd_crop_plan(conf, strict)
    elif args.command == "tta-plan":
        summary = cmd_tta_plan(conf, strict)
    elif args.command == "mock-predict":
        summary = cmd_mock_predict(conf, seed)
    elif args.command == "fuse":
        models = [m.strip() for m in args.models.split(",")] if args.models else None
        summary = cmd_fuse(conf, args.strategy, models, args.output)
    elif args.command == "evaluate":
        cmd_evaluate(conf, _parse_named_paths(args.predictions), strict)
        return
    else:
        summary = cmd_run_all(conf, strict, seed)
        summary = {"stage": "run-all", "means": summary["means"]}
    print(dumps(summary))


def _error_payload(exc: Exception) -> dict:
    if isinstance(exc, StageFailure):
        errors = exc.errors
    elif isinstance(exc, FusionInputError) and exc.problems:
        errors = exc.problems
    elif isinstance(exc, SkateKitError):
        errors = [exc.to_dict()]
    else:
        errors = [{"type": type(exc).__name__, "message": str(exc)}]
    return {"status": "error", "message": str(exc), "errors": errors}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        _run(args)
    except SkateKitError as exc:
        sys.stderr.write(dumps(_error_payload(exc)) + "\n")
        return EXIT_VALIDATION
    except OSError as exc:
        sys.stderr.write(dumps(_error_payload(exc)) + "\n")
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
