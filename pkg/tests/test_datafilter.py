import warnings
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from conftest import make_sample
from video_rts.core import McqaSample, render_response
from video_rts.datafilter import DifficultyRecord, balanced_subsample, estimate_difficulty, filter_dataset
from video_rts.tts import InferenceError


class Rollouts:
    """Yields scripted letters in call order, per sample id."""

    def __init__(self, script):
        self.script = {k: list(v) for k, v in script.items()}

    def generate(self, sample, frame_indices, params, seed):
        a = self.script[sample.id].pop(0)
        if isinstance(a, Exception):
            raise a
        return render_response("t", a)


def test_estimate_difficulty_counts():
    s = make_sample(gt="B")
    assert estimate_difficulty(Rollouts({"q1": "B" * 8}), s).accuracy == 1.0
    assert estimate_difficulty(Rollouts({"q1": "A" * 8}), s).accuracy == 0.0
    rec = estimate_difficulty(Rollouts({"q1": "BABCBDDD"}), s)
    assert (rec.correct, rec.k, rec.accuracy) == (3, 8, 0.375)


def test_failed_rollout_counts_as_incorrect():
    s = make_sample(gt="B")
    rec = estimate_difficulty(Rollouts({"q1": ["B", InferenceError("x"), "B", "A"]}), s, k=4)
    assert rec.correct == 2


def _recs(**acc):
    return [DifficultyRecord(sid, 8, c) for sid, c in acc.items()]


def test_filter_examples():
    data = [make_sample(s) for s in ("a", "b", "c")]
    assert [s.id for s in filter_dataset(_recs(a=0, b=4, c=8), data)] == ["b"]
    assert [s.id for s in filter_dataset(_recs(a=1, b=7, c=0), data)] == ["a", "b"]
    with pytest.warns(RuntimeWarning):
        assert filter_dataset(_recs(a=0, b=0, c=0), data) == []
    with pytest.raises(KeyError):
        filter_dataset(_recs(a=3), data)


@given(st.lists(st.integers(0, 8), min_size=1, max_size=30))
def test_filter_never_admits_extremes(corrects):
    data = [make_sample(f"s{i}") for i in range(len(corrects))]
    recs = [DifficultyRecord(f"s{i}", 8, c) for i, c in enumerate(corrects)]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        kept = filter_dataset(recs, data)
    assert [s.id for s in kept] == [f"s{i}" for i, c in enumerate(corrects) if 0 < c < 8]


def _with_video(sid, vid):
    s = make_sample(sid)
    return McqaSample(sid, type(s.video)(vid, s.video.frame_evidence), s.question, s.options, s.gt_answer)


def test_balanced_subsample_examples():
    data = [_with_video(f"{v}{i}", v) for v in "xyz" for i in range(4)]
    out = balanced_subsample(data, 6, seed=1)
    assert Counter(s.video.video_id for s in out) == {"x": 2, "y": 2, "z": 2}
    assert balanced_subsample(data, len(data), seed=1) == data
    skew = [_with_video(f"a{i}", "a") for i in range(5)] + [_with_video("b0", "b")]
    out = balanced_subsample(skew, 4, seed=0)
    assert Counter(s.video.video_id for s in out) == {"a": 3, "b": 1}
    with pytest.raises(ValueError):
        balanced_subsample(skew, 7)


@given(st.lists(st.integers(1, 6), min_size=1, max_size=6), st.data())
def test_balanced_is_fair_and_ordered(sizes, data):
    ds = [_with_video(f"v{v}-{i}", f"v{v}") for v, n in enumerate(sizes) for i in range(n)]
    target = data.draw(st.integers(0, len(ds)))
    out = balanced_subsample(ds, target, seed=3)
    assert len(out) == target
    pos = {s.id: i for i, s in enumerate(ds)}
    assert [pos[s.id] for s in out] == sorted(pos[s.id] for s in out)
    got = Counter(s.video.video_id for s in out)
    # no video is short-changed while another gets more than one extra
    for v, n in enumerate(sizes):
        if got[f"v{v}"] < n:
            assert all(c <= got[f"v{v}"] + 1 for c in got.values())
    assert balanced_subsample(ds, target, seed=3) == out


def test_record_roundtrip():
    r = DifficultyRecord("x", 8, 3)
    assert DifficultyRecord.from_dict(r.to_dict()) == r
    with pytest.raises(ValueError):
        DifficultyRecord("x", 8, 9)
