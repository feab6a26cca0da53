"""Per-video ROI consolidation and crop planning from per-frame human detections."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from skatekit.errors import (
    ConfigurationError,
    InvalidFrame,
    NoDetections,
    ParseError,
    RecordValidationError,
)
from skatekit.jsonl import parse_lines

DETECTION_KEYS = ("video_id", "frame", "x1", "y1", "x2", "y2", "score")


@dataclass(frozen=True, slots=True)
class BoundingBox:
    x1: float
    y1: float
    x2: float
    y2: float
    score: float = 1.0

    def __post_init__(self):
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise ValueError(f"degenerate box ({self.x1}, {self.y1}, {self.x2}, {self.y2})")
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"score {self.score} outside [0, 1]")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    def contains(self, other: "BoundingBox") -> bool:
        return (
            self.x1 <= other.x1 and self.y1 <= other.y1
            and self.x2 >= other.x2 and self.y2 >= other.y2
        )

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class VideoInfo:
    """One entry of the sidecar video manifest."""

    video_id: str
    width: int
    height: int
    num_frames: int

    @classmethod
    def from_record(cls, rec: dict) -> "VideoInfo":
        try:
            vid = rec["video_id"]
            width, height, num_frames = rec["width"], rec["height"], rec["num_frames"]
        except KeyError as exc:
            raise ConfigurationError(f"manifest entry missing key {exc.args[0]!r}: {rec}") from None
        for name, v in (("width", width), ("height", height), ("num_frames", num_frames)):
            if not _is_int(v) or v < 0 or (name != "num_frames" and v == 0):
                raise ConfigurationError(f"manifest entry for {vid!r}: bad {name} {v!r}")
        return cls(str(vid), int(width), int(height), int(num_frames))

    def to_record(self) -> dict:
        return {
            "video_id": self.video_id,
            "width": self.width,
            "height": self.height,
            "num_frames": self.num_frames,
        }


@dataclass
class DetectionTrack:
    video_id: str
    frame_width: int
    frame_height: int
    frames: list[tuple[int, list[BoundingBox]]] = field(default_factory=list)

    def boxes(self) -> Iterable[BoundingBox]:
        for _, boxes in self.frames:
            yield from boxes


@dataclass(frozen=True)
class CropSpec:
    video_id: str
    union_box: BoundingBox
    crop_x: int
    crop_y: int
    crop_w: int
    crop_h: int

    def fits(self, frame_width: int, frame_height: int) -> bool:
        return (
            self.crop_x >= 0 and self.crop_y >= 0
            and self.crop_x + self.crop_w <= frame_width
            and self.crop_y + self.crop_h <= frame_height
            and self.crop_w >= 2 and self.crop_h >= 2
            and self.crop_w % 2 == 0 and self.crop_h % 2 == 0
        )

    def to_record(self) -> dict:
        return {
            "video_id": self.video_id,
            "crop_x": self.crop_x,
            "crop_y": self.crop_y,
            "crop_w": self.crop_w,
            "crop_h": self.crop_h,
            "filter": emit_crop_filter(self),
            "union": list(self.union_box.as_tuple()),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CropSpec":
        try:
            x, y, w, h = (rec[k] for k in ("crop_x", "crop_y", "crop_w", "crop_h"))
            vid = str(rec["video_id"])
        except KeyError as exc:
            raise ParseError(f"crop plan record missing key {exc.args[0]!r}") from None
        if not all(_is_int(v) for v in (x, y, w, h)):
            raise ParseError(f"crop plan record for {vid!r} has non-integer geometry")
        union = rec.get("union") or (x, y, x + w, y + h)
        return cls(vid, BoundingBox(*map(float, union)), x, y, w, h)


@dataclass
class IngestResult:
    tracks: list[DetectionTrack]
    dropped_degenerate: int = 0
    invalid_records: list[RecordValidationError] = field(default_factory=list)


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def ingest_detections(
    lines: Iterable[str],
    videos: Mapping[str, VideoInfo],
    *,
    strict: bool = False,
    source: str | None = None,
) -> IngestResult:
    """Group detection records into one track per manifest video.

    Every video in ``videos`` gets a track, possibly with no frames. Boxes
    are clamped to the frame; those left with zero area are dropped and
    counted. Records with inverted coordinates are collected in
    ``invalid_records`` (raised immediately when ``strict``).
    """
    per_video: dict[str, dict[int, list[BoundingBox]]] = {vid: {} for vid in videos}
    result = IngestResult(tracks=[])

    for lineno, rec in parse_lines(lines, source):
        missing = [k for k in DETECTION_KEYS if k not in rec]
        if missing:
            raise ParseError(f"missing field(s) {', '.join(missing)}", lineno, source)
        vid = rec["video_id"]
        if not isinstance(vid, str):
            raise ParseError("video_id must be a string", lineno, source)
        frame = rec["frame"]
        if not _is_int(frame) or frame < 0:
            raise ParseError(f"frame must be a non-negative integer, got {frame!r}", lineno, source)
        coords = [rec[k] for k in ("x1", "y1", "x2", "y2")]
        if not all(_is_num(c) for c in coords) or not _is_num(rec["score"]):
            raise ParseError("coordinates and score must be finite numbers", lineno, source)
        if vid not in videos:
            raise ConfigurationError(f"line {lineno}: no frame dimensions for video {vid!r}")

        x1, y1, x2, y2 = (float(c) for c in coords)
        score = float(rec["score"])
        problem = None
        if x1 >= x2 or y1 >= y2:
            problem = f"inverted or empty box ({x1}, {y1}, {x2}, {y2})"
        elif not 0.0 <= score <= 1.0:
            problem = f"score {score} outside [0, 1]"
        if problem:
            err = RecordValidationError(problem, lineno, vid)
            if strict:
                raise err
            result.invalid_records.append(err)
            continue

        info = videos[vid]
        w, h = float(info.width), float(info.height)
        cx1, cx2 = min(max(x1, 0.0), w), min(max(x2, 0.0), w)
        cy1, cy2 = min(max(y1, 0.0), h), min(max(y2, 0.0), h)
        if cx1 >= cx2 or cy1 >= cy2:
            result.dropped_degenerate += 1
            continue
        per_video[vid].setdefault(frame, []).append(BoundingBox(cx1, cy1, cx2, cy2, score))

    for vid in sorted(per_video):
        info = videos[vid]
        frames = [(idx, per_video[vid][idx]) for idx in sorted(per_video[vid])]
        result.tracks.append(DetectionTrack(vid, info.width, info.height, frames))
    return result


def consolidate_box(track: DetectionTrack, score_threshold: float = 0.0) -> BoundingBox:
    """Coordinate-wise envelope of every box scoring at least ``score_threshold``."""
    x1 = y1 = math.inf
    x2 = y2 = -math.inf
    found = False
    for _, boxes in track.frames:
        for b in boxes:
            if b.score < score_threshold:
                continue
            found = True
            if b.x1 < x1:
                x1 = b.x1
            if b.y1 < y1:
                y1 = b.y1
            if b.x2 > x2:
                x2 = b.x2
            if b.y2 > y2:
                y2 = b.y2
    if not found:
        raise NoDetections(
            track.video_id,
            f"no detection with score >= {score_threshold} for video {track.video_id!r}",
        )
    return BoundingBox(x1, y1, x2, y2, 1.0)


def _even_span(lo: float, hi: float, limit: int) -> tuple[int, int]:
    """Integer ``(start, length)`` covering [lo, hi] with even length within [0, limit]."""
    start = math.floor(lo)
    length = math.ceil(hi) - start
    if length % 2:
        length += 1
    if start + length > limit:
        # Shift left first so the span still covers [lo, hi]; only a
        # full-width span over an odd dimension has to give up a column.
        if start > 0:
            start -= 1
        else:
            length -= 2
    return start, length


def make_crop_spec(
    union_box: BoundingBox,
    frame_width: int,
    frame_height: int,
    pad_fraction: float = 0.0,
    video_id: str = "",
) -> CropSpec:
    if frame_width < 2 or frame_height < 2:
        raise InvalidFrame(f"frame {frame_width}x{frame_height} is smaller than 2x2")
    if pad_fraction < 0 or not math.isfinite(pad_fraction):
        raise ValueError(f"pad_fraction must be >= 0, got {pad_fraction}")
    b = union_box
    if b.x2 <= 0 or b.y2 <= 0 or b.x1 >= frame_width or b.y1 >= frame_height:
        raise NoDetections(video_id, f"ROI for video {video_id!r} lies outside the frame")

    pad = pad_fraction * max(b.width, b.height)
    x1 = max(0.0, b.x1 - pad)
    y1 = max(0.0, b.y1 - pad)
    x2 = min(float(frame_width), b.x2 + pad)
    y2 = min(float(frame_height), b.y2 + pad)

    cx, cw = _even_span(x1, x2, frame_width)
    cy, ch = _even_span(y1, y2, frame_height)
    return CropSpec(video_id, union_box, cx, cy, cw, ch)


def full_frame_crop_spec(video_id: str, frame_width: int, frame_height: int) -> CropSpec:
    """Fallback crop for videos without usable detections."""
    if frame_width < 2 or frame_height < 2:
        raise InvalidFrame(f"frame {frame_width}x{frame_height} is smaller than 2x2")
    box = BoundingBox(0.0, 0.0, float(frame_width), float(frame_height), 1.0)
    return CropSpec(video_id, box, 0, 0, frame_width - frame_width % 2, frame_height - frame_height % 2)


def emit_crop_filter(spec: CropSpec) -> str:
    return f"crop={spec.crop_w}:{spec.crop_h}:{spec.crop_x}:{spec.crop_y}"


def plan_crop(
    track: DetectionTrack,
    score_threshold: float = 0.0,
    pad_fraction: float = 0.0,
    fallback_full_frame: bool = False,
) -> CropSpec:
    """consolidate_box followed by make_crop_spec, with the optional full-frame fallback."""
    try:
        box = consolidate_box(track, score_threshold)
        return make_crop_spec(box, track.frame_width, track.frame_height, pad_fraction, track.video_id)
    except NoDetections:
        if not fallback_full_frame:
            raise
        return full_frame_crop_spec(track.video_id, track.frame_width, track.frame_height)


def load_manifest(lines: Iterable[str], source: str | None = None) -> dict[str, VideoInfo]:
    videos: dict[str, VideoInfo] = {}
    for lineno, rec in parse_lines(lines, source):
        info = VideoInfo.from_record(rec)
        if info.video_id in videos:
            raise ConfigurationError(f"line {lineno}: duplicate manifest entry for {info.video_id!r}")
        videos[info.video_id] = info
    return videos

