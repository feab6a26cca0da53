"""Test-time-augmentation view planning: temporal clip windows x square spatial crops."""

from __future__ import annotations

from dataclasses import dataclass

from skatekit.errors import ConfigurationError, EmptyVideo, UnsupportedConfiguration
from skatekit.roi import CropSpec, VideoInfo

POSITION_TAGS = ("first", "center", "last")


@dataclass(frozen=True)
class TtaConfig:
    clip_len: int = 16
    stride: int = 1
    temporal_views: int = 5
    spatial_views: int = 3

    def __post_init__(self):
        for name in ("clip_len", "stride", "temporal_views", "spatial_views"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigurationError(f"tta {name} must be a positive integer, got {v!r}")

    @property
    def num_views(self) -> int:
        return self.temporal_views * self.spatial_views


@dataclass(frozen=True)
class ClipWindow:
    start_frame: int
    frame_indices: tuple[int, ...]


@dataclass(frozen=True)
class SpatialCrop:
    x: int
    y: int
    side: int
    position_tag: str


@dataclass(frozen=True)
class TtaView:
    view_id: int
    clip: ClipWindow
    crop: SpatialCrop


@dataclass(frozen=True)
class TtaPlan:
    video_id: str
    views: tuple[TtaView, ...]

    def to_records(self) -> list[dict]:
        return [
            {
                "video_id": self.video_id,
                "view_id": v.view_id,
                "frames": list(v.clip.frame_indices),
                "crop": {"x": v.crop.x, "y": v.crop.y, "side": v.crop.side},
            }
            for v in self.views
        ]


def temporal_windows(num_frames: int, clip_len: int = 16, stride: int = 1, num_views: int = 5) -> list[ClipWindow]:
    """Evenly spaced clip windows; short videos repeat their last frame.

    Starts are ``round(k * (num_frames - span) / (num_views - 1))`` with
    halves rounded up, computed in exact integer arithmetic.
    """
    if num_frames <= 0:
        raise EmptyVideo(f"video has {num_frames} frames")
    if clip_len < 1 or stride < 1 or num_views < 1:
        raise ConfigurationError("clip_len, stride and num_views must all be >= 1")

    span = (clip_len - 1) * stride + 1
    last = num_frames - 1
    if num_frames < span:
        indices = tuple(min(j * stride, last) for j in range(clip_len))
        return [ClipWindow(0, indices) for _ in range(num_views)]

    slack = num_frames - span
    windows = []
    for k in range(num_views):
        if num_views == 1:
            start = 0
        else:
            denom = num_views - 1
            start = (2 * k * slack + denom) // (2 * denom)
        windows.append(ClipWindow(start, tuple(start + j * stride for j in range(clip_len))))
    return windows


def spatial_crops(crop_w: int, crop_h: int, num_views: int = 3) -> list[SpatialCrop]:
    if num_views != 3:
        raise UnsupportedConfiguration(f"only 3 spatial views are supported, got {num_views}")
    if crop_w < 1 or crop_h < 1:
        raise ConfigurationError(f"crop size {crop_w}x{crop_h} must be positive")

    side = min(crop_w, crop_h)
    slack = max(crop_w, crop_h) - side
    offsets = (0, slack // 2, slack)
    if crop_w >= crop_h:
        return [SpatialCrop(o, 0, side, tag) for o, tag in zip(offsets, POSITION_TAGS)]
    return [SpatialCrop(0, o, side, tag) for o, tag in zip(offsets, POSITION_TAGS)]


def build_tta_plan(video: VideoInfo, crop_spec: CropSpec, config: TtaConfig = TtaConfig()) -> TtaPlan:
    if crop_spec.video_id != video.video_id:
        raise ConfigurationError(
            f"crop spec for {crop_spec.video_id!r} does not belong to video {video.video_id!r}"
        )
    try:
        clips = temporal_windows(video.num_frames, config.clip_len, config.stride, config.temporal_views)
    except EmptyVideo:
        raise EmptyVideo(f"video {video.video_id!r} has no frames") from None
    crops = spatial_crops(crop_spec.crop_w, crop_spec.crop_h, config.spatial_views)
    views = tuple(
        TtaView(t * config.spatial_views + s, clip, crop)
        for t, clip in enumerate(clips)
        for s, crop in enumerate(crops)
    )
    return TtaPlan(video.video_id, views)
