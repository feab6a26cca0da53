from collections import Counter

import numpy as np
import pytest

from skatekit.errors import ConfigurationError
from skatekit.mock import MockPredictorSpec, choose_targets, generate_logits
from skatekit.rng import SplitMix64, fnv1a64


class TestRng:
    def test_splitmix64_reference_sequence(self):
        # published SplitMix64 outputs for state 0
        rng = SplitMix64(0)
        assert [rng.next_u64() for _ in range(3)] == [
            0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F,
        ]

    def test_fnv1a64_reference(self):
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C

    def test_keyed_streams_independent_of_call_order(self):
        a = SplitMix64.for_key(7, "view", "v1", "m", 3).random()
        SplitMix64.for_key(7, "other").random()
        assert SplitMix64.for_key(7, "view", "v1", "m", 3).random() == a
        assert SplitMix64.for_key(8, "view", "v1", "m", 3).random() != a

    def test_ranges(self):
        rng = SplitMix64(123)
        us = [rng.random() for _ in range(5000)]
        assert min(us) >= 0 and max(us) < 1
        ks = Counter(rng.randbelow(7) for _ in range(7000))
        assert set(ks) == set(range(7))
        gs = np.array([rng.gauss() for _ in range(20000)])
        assert abs(gs.mean()) < 0.03 and abs(gs.std() - 1) < 0.03


def labels_for(n, classes):
    return {f"v{i:04d}": i % classes for i in range(n)}


def top1_by_video(records):
    return {(r["video_id"], r["model_id"], r["view_id"]): int(np.argmax(r["logits"])) for r in records}


class TestMock:
    def test_perfect_noiseless(self):
        labels = labels_for(60, 5)
        spec = MockPredictorSpec(seed=1, per_model_skill={"a": 1.0, "b": 1.0}, noise_scale=0.0)
        recs = list(generate_logits({v: range(15) for v in labels}, labels, 5, spec))
        assert len(recs) == 60 * 2 * 15
        assert all(np.argmax(r["logits"]) == labels[r["video_id"]] for r in recs)

    def test_zero_skill_is_chance(self):
        classes, n = 4, 2000
        labels = labels_for(n, classes)
        spec = MockPredictorSpec(seed=2, per_model_skill={"m": 0.0}, noise_scale=0.0)
        recs = generate_logits({v: [0] for v in labels}, labels, classes, spec)
        hits, totals = Counter(), Counter()
        for r in recs:
            y = labels[r["video_id"]]
            totals[y] += 1
            hits[y] += int(np.argmax(r["logits"])) == y
        for c in range(classes):
            assert abs(hits[c] / totals[c] - 1 / classes) <= 0.05

    def test_independent_skill_rate(self):
        labels = labels_for(3000, 10)
        spec = MockPredictorSpec(seed=3, per_model_skill={"m": 0.8})
        t = choose_targets(labels, 10, spec)
        acc = np.mean([t[v, "m"] == y for v, y in labels.items()])
        # skill + (1 - skill) / C = 0.82
        assert abs(acc - 0.82) < 0.03

    def test_complementary_errors_disjoint_and_exact(self):
        labels = labels_for(500, 28)
        skills = {"UMT": 0.945, "UniformerV2": 0.95, "InfoGCN": 0.92}
        spec = MockPredictorSpec(seed=4, per_model_skill=skills, error_mode="complementary")
        t = choose_targets(labels, 28, spec)
        wrong = {m: {v for v in labels if t[v, m] != labels[v]} for m in skills}
        assert not (wrong["UMT"] & wrong["UniformerV2"]) and not (wrong["UMT"] & wrong["InfoGCN"])
        assert not (wrong["UniformerV2"] & wrong["InfoGCN"])
        # rank fractions r/500 inside [lo, hi)
        assert {m: len(w) for m, w in wrong.items()} == {"UMT": 28, "UniformerV2": 25, "InfoGCN": 40}

    def test_complementary_budget(self):
        with pytest.raises(ConfigurationError):
            MockPredictorSpec(per_model_skill={"a": 0.3, "b": 0.5}, error_mode="complementary")

    def test_reproducible(self):
        labels = labels_for(20, 4)
        spec = MockPredictorSpec(seed=9, per_model_skill={"a": 0.7, "b": 0.9})
        views = {v: range(3) for v in labels}
        first = list(generate_logits(views, labels, 4, spec))
        assert first == list(generate_logits(views, labels, 4, spec))
        other = list(generate_logits(views, labels, 4, MockPredictorSpec(seed=10, per_model_skill={"a": 0.7, "b": 0.9})))
        assert other != first

    def test_record_order(self):
        labels = labels_for(3, 2)
        spec = MockPredictorSpec(per_model_skill={"z": 1.0, "a": 1.0})
        keys = [(r["video_id"], r["model_id"], r["view_id"]) for r in generate_logits({v: [1, 0] for v in labels}, labels, 2, spec)]
        assert keys[:4] == [("v0000", "z", 0), ("v0000", "z", 1), ("v0000", "a", 0), ("v0000", "a", 1)]

    def test_missing_label(self):
        spec = MockPredictorSpec(per_model_skill={"a": 1.0})
        with pytest.raises(ConfigurationError):
            list(generate_logits({"x": [0]}, {}, 3, spec))

    @pytest.mark.parametrize("kwargs", [
        {"per_model_skill": {}},
        {"per_model_skill": {"a": 1.5}},
        {"per_model_skill": {"a": 0.5}, "margin": 0},
        {"per_model_skill": {"a": 0.5}, "noise_scale": -1},
        {"per_model_skill": {"a": 0.5}, "error_mode": "weird"},
    ])
    def test_invalid_spec(self, kwargs):
        with pytest.raises(ConfigurationError):
            MockPredictorSpec(**kwargs)
