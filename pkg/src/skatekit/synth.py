"""Synthetic demo dataset: manifest, detections, class map, labels and a config.

Used by the ``demo-fixture`` subcommand and the end-to-end tests.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from skatekit.jsonl import atomic_write_text, write_jsonl
from skatekit.rng import SplitMix64

FRAME_SIZES = ((1920, 1080), (1280, 720), (640, 360), (854, 480))

DEFAULT_SKILLS = {"UMT": 0.945, "UniformerV2": 0.95, "InfoGCN": 0.92}
DEFAULT_RAW_WEIGHTS = (94.5, 95.0, 92.0)


def class_names(num_classes: int) -> list[str]:
    return [f"action_{i:02d}" for i in range(num_classes)]


def synth_video(rng: SplitMix64, video_id: str, min_frames: int, max_frames: int):
    width, height = FRAME_SIZES[rng.randbelow(len(FRAME_SIZES))]
    num_frames = min_frames + rng.randbelow(max_frames - min_frames + 1)
    detections = []
    # The skater wanders around a fixed anchor; some frames miss, a few get a
    # low-score spurious box.
    bw = width * (0.08 + 0.1 * rng.random())
    bh = height * (0.25 + 0.3 * rng.random())
    cx = width * (0.2 + 0.6 * rng.random())
    cy = height * (0.3 + 0.4 * rng.random())
    step = max(1, num_frames // 24)
    for frame in range(0, num_frames, step):
        if rng.random() < 0.1:
            continue
        cx = min(max(cx + width * 0.02 * rng.gauss(), 0.0), float(width))
        cy = min(max(cy + height * 0.01 * rng.gauss(), 0.0), float(height))
        detections.append({
            "video_id": video_id, "frame": frame,
            "x1": round(cx - bw / 2, 2), "y1": round(cy - bh / 2, 2),
            "x2": round(cx + bw / 2, 2), "y2": round(cy + bh / 2, 2),
            "score": round(0.6 + 0.4 * rng.random(), 3),
        })
        if rng.random() < 0.05:
            sx, sy = width * rng.random(), height * rng.random()
            detections.append({
                "video_id": video_id, "frame": frame,
                "x1": round(sx, 2), "y1": round(sy, 2),
                "x2": round(sx + 20, 2), "y2": round(sy + 40, 2),
                "score": round(0.3 * rng.random(), 3),
            })
    manifest = {"video_id": video_id, "width": width, "height": height, "num_frames": num_frames}
    return manifest, detections


def make_demo_dataset(
    out_dir: str | Path,
    num_videos: int = 500,
    num_classes: int = 28,
    seed: int = 0,
    skills: dict[str, float] | None = None,
    min_frames: int = 40,
    max_frames: int = 400,
) -> Path:
    """Write a complete demo dataset and return the path of its config file.

    Labels are balanced (class = shuffled position modulo ``num_classes``).
    The mock section uses complementary errors with low-confidence mistakes,
    the setting under which fusion can beat every single model.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    skills = dict(skills or DEFAULT_SKILLS)
    rng = SplitMix64.for_key(seed, "demo-dataset")

    video_ids = [f"video_{i:05d}" for i in range(num_videos)]
    manifest, detections = [], []
    for vid in video_ids:
        m, d = synth_video(rng, vid, min_frames, max_frames)
        manifest.append(m)
        detections.extend(d)

    order = list(range(num_videos))
    for i in range(num_videos - 1, 0, -1):
        j = rng.randbelow(i + 1)
        order[i], order[j] = order[j], order[i]
    names = class_names(num_classes)
    labels = {video_ids[pos]: names[rank % num_classes] for rank, pos in enumerate(order)}

    write_jsonl(out_dir / "manifest.jsonl", manifest)
    write_jsonl(out_dir / "detections.jsonl", detections)
    atomic_write_text(out_dir / "classes.txt", "".join(n + "\n" for n in names))
    atomic_write_text(out_dir / "labels.txt", "".join(f"{v}\t{labels[v]}\n" for v in video_ids))

    models = list(skills)
    weights = list(DEFAULT_RAW_WEIGHTS) if models == list(DEFAULT_SKILLS) else [100 * s for s in skills.values()]
    config = {
        "paths": {
            "detections": "detections.jsonl",
            "manifest": "manifest.jsonl",
            "class_map": "classes.txt",
            "labels": "labels.txt",
            "output_dir": "out",
        },
        "roi": {"score_threshold": 0.5, "pad_fraction": 0.1, "fallback_full_frame": False},
        "tta": {"clip_len": 16, "stride": 1, "temporal_views": 5, "spatial_views": 3},
        "ensemble": {
            "strategy": "weighted",
            "model_order": models,
            "tiebreak_model": "UniformerV2" if "UniformerV2" in models else models[0],
            "raw_weights": weights,
            "view_fusion": "prob_mean",
            "umt_aggregation": "sum_softmax",
        },
        "mock": {
            "seed": seed,
            "per_model_skill": skills,
            "noise_scale": 1.0,
            "margin": 4.0,
            "error_margin_scale": 0.5,
            "error_mode": "complementary",
        },
    }
    path = out_dir / "config.yaml"
    atomic_write_text(path, yaml.safe_dump(config, sort_keys=False))
    return path
