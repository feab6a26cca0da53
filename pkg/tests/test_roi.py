import io
import json
import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from skatekit.errors import ConfigurationError, InvalidFrame, NoDetections, ParseError, RecordValidationError
from skatekit.roi import (
    BoundingBox,
    CropSpec,
    DetectionTrack,
    VideoInfo,
    consolidate_box,
    emit_crop_filter,
    full_frame_crop_spec,
    ingest_detections,
    make_crop_spec,
    plan_crop,
)

VIDEOS = {"v1": VideoInfo("v1", 100, 100, 50)}


def det(vid="v1", frame=0, x1=10, y1=20, x2=50, y2=60, score=0.9):
    return json.dumps({"video_id": vid, "frame": frame, "x1": x1, "y1": y1, "x2": x2, "y2": y2, "score": score})


def track_of(*boxes, video_id="v", w=100, h=100):
    return DetectionTrack(video_id, w, h, [(i, [b]) for i, b in enumerate(boxes)])


def brute_union(coords):
    return (min(c[0] for c in coords), min(c[1] for c in coords),
            max(c[2] for c in coords), max(c[3] for c in coords))


def random_track(rng, w=1920, h=1080, max_frames=50, max_boxes=5):
    frames = []
    coords = []
    for f in range(rng.randint(1, max_frames)):
        boxes = []
        for _ in range(rng.randint(1, max_boxes)):
            x1, x2 = sorted(rng.sample(range(w + 1), 2))
            y1, y2 = sorted(rng.sample(range(h + 1), 2))
            boxes.append(BoundingBox(float(x1), float(y1), float(x2), float(y2), rng.random()))
            coords.append((x1, y1, x2, y2))
        frames.append((f, boxes))
    return DetectionTrack("t", w, h, frames), coords


class TestIngest:
    def test_passthrough(self):
        res = ingest_detections([det()], VIDEOS)
        assert len(res.tracks) == 1
        (idx, boxes), = res.tracks[0].frames
        assert idx == 0
        assert boxes[0].as_tuple() == (10, 20, 50, 60)

    def test_clamp_at_boundary(self):
        res = ingest_detections([det(x1=-5, y1=10)], VIDEOS)
        assert res.tracks[0].frames[0][1][0].as_tuple() == (0, 10, 50, 60)

    def test_out_of_frame_box_dropped(self):
        res = ingest_detections([det(x1=120, y1=10, x2=130, y2=60)], VIDEOS)
        assert res.dropped_degenerate == 1
        assert res.tracks[0].frames == []

    def test_groups_and_sorts(self):
        videos = {"a": VideoInfo("a", 100, 100, 10), "b": VideoInfo("b", 100, 100, 10)}
        lines = [det("b", 3), det("a", 5), det("a", 1), det("a", 5, x1=0)]
        res = ingest_detections(lines, videos)
        assert [t.video_id for t in res.tracks] == ["a", "b"]
        assert [f for f, _ in res.tracks[0].frames] == [1, 5]
        assert len(res.tracks[0].frames[1][1]) == 2

    def test_manifest_video_without_detections_gets_empty_track(self):
        videos = {"v1": VIDEOS["v1"], "v2": VideoInfo("v2", 64, 48, 5)}
        res = ingest_detections([det()], videos)
        assert res.tracks[1].video_id == "v2" and res.tracks[1].frames == []

    def test_malformed_line_names_line_number(self):
        with pytest.raises(ParseError) as exc:
            ingest_detections([det(), "{not json"], VIDEOS)
        assert exc.value.line_number == 2

    def test_missing_field_is_parse_error(self):
        with pytest.raises(ParseError, match="score"):
            ingest_detections(['{"video_id": "v1", "frame": 0, "x1": 1, "y1": 1, "x2": 2, "y2": 2}'], VIDEOS)

    def test_inverted_box_collected(self):
        res = ingest_detections([det(x1=60, x2=50), det(frame=1)], VIDEOS)
        assert len(res.invalid_records) == 1
        assert res.invalid_records[0].line_number == 1
        assert len(res.tracks[0].frames) == 1

    def test_inverted_box_strict(self):
        with pytest.raises(RecordValidationError):
            ingest_detections([det(y1=70)], VIDEOS, strict=True)

    def test_unknown_video_is_fatal(self):
        with pytest.raises(ConfigurationError, match="nope"):
            ingest_detections([det("nope")], VIDEOS)

    def test_blank_lines_skipped(self):
        res = ingest_detections(io.StringIO(det() + "\n\n" + det(frame=2) + "\n"), VIDEOS)
        assert len(res.tracks[0].frames) == 2


class TestConsolidate:
    def test_union(self):
        t = track_of(BoundingBox(10, 20, 50, 60), BoundingBox(30, 10, 70, 40))
        assert consolidate_box(t, 0).as_tuple() == (10, 10, 70, 60)

    def test_single_box_identity(self):
        assert consolidate_box(track_of(BoundingBox(10, 20, 50, 60, 0.3))).as_tuple() == (10, 20, 50, 60)

    def test_union_score_fixed_at_one(self):
        assert consolidate_box(track_of(BoundingBox(10, 20, 50, 60, 0.3))).score == 1.0

    def test_threshold_filters(self):
        t = track_of(BoundingBox(10, 20, 50, 60, 0.9), BoundingBox(0, 0, 99, 99, 0.1))
        assert consolidate_box(t, 0.5).as_tuple() == (10, 20, 50, 60)

    def test_no_survivor_raises_with_video_id(self):
        t = track_of(BoundingBox(10, 20, 50, 60, 0.1), video_id="vx")
        with pytest.raises(NoDetections) as exc:
            consolidate_box(t, 0.5)
        assert exc.value.video_id == "vx"

    def test_empty_track(self):
        with pytest.raises(NoDetections):
            consolidate_box(DetectionTrack("e", 10, 10, []))

    def test_random_tracks_match_brute_force(self):
        rng = random.Random(7)
        for _ in range(100):
            track, coords = random_track(rng)
            assert consolidate_box(track).as_tuple() == brute_union(coords)

    def test_monotone_under_added_box(self):
        rng = random.Random(11)
        for _ in range(200):
            track, _ = random_track(rng, max_frames=10)
            before = consolidate_box(track)
            extra, _ = random_track(rng, max_frames=1, max_boxes=1)
            track.frames.append((len(track.frames), extra.frames[0][1]))
            assert consolidate_box(track).contains(before)

    def test_idempotent(self):
        rng = random.Random(5)
        for _ in range(50):
            track, _ = random_track(rng)
            u = consolidate_box(track)
            assert consolidate_box(track_of(u, w=1920, h=1080)) == u

    def test_contains_every_surviving_box(self):
        rng = random.Random(9)
        for _ in range(50):
            track, _ = random_track(rng)
            t = rng.random() * 0.5
            survivors = [b for b in track.boxes() if b.score >= t]
            if not survivors:
                continue
            u = consolidate_box(track, t)
            assert all(u.contains(b) for b in survivors)

    def test_order_independent(self):
        rng = random.Random(13)
        for _ in range(50):
            track, _ = random_track(rng)
            frames = [(i, list(boxes)) for i, boxes in track.frames]
            rng.shuffle(frames)
            for _, boxes in frames:
                rng.shuffle(boxes)
            shuffled = DetectionTrack("t", track.frame_width, track.frame_height, frames)
            assert consolidate_box(shuffled) == consolidate_box(track)


def contains_int_rect(spec, box, w, h):
    x1, y1 = max(box.x1, 0), max(box.y1, 0)
    x2, y2 = min(box.x2, w), min(box.y2, h)
    return (spec.crop_x <= x1 and spec.crop_y <= y1
            and spec.crop_x + spec.crop_w >= x2 and spec.crop_y + spec.crop_h >= y2)


class TestCropSpec:
    def test_exact_integers(self):
        s = make_crop_spec(BoundingBox(10, 10, 70, 60), 100, 100)
        assert (s.crop_x, s.crop_y, s.crop_w, s.crop_h) == (10, 10, 60, 50)

    def test_fractional_rounding(self):
        # floor(10.5) = 10; ceil(70.3) - 10 = 61 -> 62; ceil(60.7) - 10 = 51 -> 52
        box = BoundingBox(10.5, 10.5, 70.3, 60.7)
        s = make_crop_spec(box, 100, 100)
        assert (s.crop_x, s.crop_y, s.crop_w, s.crop_h) == (10, 10, 62, 52)
        assert contains_int_rect(s, box, 100, 100)

    def test_padding_clamped_to_frame(self):
        s = make_crop_spec(BoundingBox(0, 0, 100, 100), 100, 100, pad_fraction=0.1)
        assert (s.crop_x, s.crop_y, s.crop_w, s.crop_h) == (0, 0, 100, 100)

    def test_padding_expands(self):
        # 40x40 box, pad 0.25 * 40 = 10 per side
        s = make_crop_spec(BoundingBox(30, 30, 70, 70), 100, 100, pad_fraction=0.25)
        assert (s.crop_x, s.crop_y, s.crop_w, s.crop_h) == (20, 20, 60, 60)

    def test_overflow_shifts_left(self):
        # ceil(101) - 90 = 11 -> 12 overflows a 101-wide frame; start moves to 89
        s = make_crop_spec(BoundingBox(90, 0, 101, 10), 101, 50)
        assert (s.crop_x, s.crop_w) == (89, 12)
        assert s.fits(101, 50)

    def test_full_odd_frame_shrinks(self):
        s = make_crop_spec(BoundingBox(0, 0, 101, 51), 101, 51)
        assert (s.crop_x, s.crop_y, s.crop_w, s.crop_h) == (0, 0, 100, 50)

    def test_outside_frame(self):
        with pytest.raises(NoDetections):
            make_crop_spec(BoundingBox(120, 10, 130, 60), 100, 100, video_id="v")

    def test_tiny_frame(self):
        with pytest.raises(InvalidFrame):
            make_crop_spec(BoundingBox(0, 0, 1, 1), 1, 100)

    def test_fallback(self):
        t = DetectionTrack("v", 101, 75, [])
        with pytest.raises(NoDetections):
            plan_crop(t)
        s = plan_crop(t, fallback_full_frame=True)
        assert (s.crop_x, s.crop_y, s.crop_w, s.crop_h) == (0, 0, 100, 74)
        assert s == full_frame_crop_spec("v", 101, 75)

    @settings(max_examples=300, deadline=None)
    @given(
        w=st.integers(2, 4000), h=st.integers(2, 4000),
        fx=st.tuples(st.floats(-0.2, 1.2), st.floats(-0.2, 1.2)),
        fy=st.tuples(st.floats(-0.2, 1.2), st.floats(-0.2, 1.2)),
        pad=st.floats(0, 1),
    )
    def test_crop_safety(self, w, h, fx, fy, pad):
        x1, x2 = sorted(v * w for v in fx)
        y1, y2 = sorted(v * h for v in fy)
        if x1 >= x2 or y1 >= y2 or x2 <= 0 or y2 <= 0 or x1 >= w or y1 >= h:
            return
        box = BoundingBox(x1, y1, x2, y2)
        s = make_crop_spec(box, w, h, pad)
        assert s.fits(w, h)
        ix1, ix2 = max(x1, 0), min(x2, w)
        iy1, iy2 = max(y1, 0), min(y2, h)
        # containment can only fail when an odd dimension is spanned end to end
        if not (w % 2 and math.floor(ix1 - pad * max(x2 - x1, y2 - y1)) <= 0 and math.ceil(ix2) >= w):
            assert s.crop_x <= ix1 and s.crop_x + s.crop_w >= ix2
        if not (h % 2 and math.floor(iy1 - pad * max(x2 - x1, y2 - y1)) <= 0 and math.ceil(iy2) >= h):
            assert s.crop_y <= iy1 and s.crop_y + s.crop_h >= iy2


class TestFilter:
    def test_format(self):
        s = CropSpec("v", BoundingBox(10, 10, 70, 60), 10, 10, 60, 50)
        assert emit_crop_filter(s) == "crop=60:50:10:10"

    def test_full_frame(self):
        s = CropSpec("v", BoundingBox(0, 0, 100, 100), 0, 0, 100, 100)
        assert emit_crop_filter(s) == "crop=100:100:0:0"

    def test_from_fractional_box(self):
        s = make_crop_spec(BoundingBox(10.5, 10.5, 70.3, 60.7), 100, 100)
        assert emit_crop_filter(s) == "crop=62:52:10:10"

    def test_record_roundtrip(self):
        s = make_crop_spec(BoundingBox(10.5, 10.5, 70.3, 60.7), 100, 100, video_id="v")
        rec = s.to_record()
        assert rec["filter"] == "crop=62:52:10:10"
        assert CropSpec.from_record(json.loads(json.dumps(rec))) == s
