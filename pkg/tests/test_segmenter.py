import numpy as np
import pytest

from qbesearch.corpus import FeatureMatrix, WordAnnotation
from qbesearch.segmenter import (
    build_pairs,
    center_pad_frames,
    context_pad,
    extract_windows,
    sample_triplets,
    subsample_pairs,
    zero_pad,
)


def ramp_utterance(t=1000, d=2, uid="u"):
    # frames[i] = [i, i+0.5] so positions are recognizable
    base = np.arange(t, dtype=np.float32)
    return FeatureMatrix(uid, np.stack([base, base + 0.5], axis=1))


class TestContextPad:
    def test_even_context_split(self):
        utt = ramp_utterance()
        seg = context_pad(utt, WordAnnotation("u", 500, 600, "w"), 200)
        assert seg.frames.shape == (200, 2)
        assert np.array_equal(seg.frames, utt.frames[450:650])

    def test_odd_context_floor_left_ceil_right(self):
        utt = ramp_utterance()
        seg = context_pad(utt, WordAnnotation("u", 500, 601, "w"), 200)
        # 49 real frames of left context, 50 of right context
        assert np.array_equal(seg.frames, utt.frames[451:651])

    def test_boundary_zero_fill_left(self):
        utt = ramp_utterance()
        seg = context_pad(utt, WordAnnotation("u", 10, 110, "w"), 200)
        assert np.all(seg.frames[:40] == 0.0)
        assert np.array_equal(seg.frames[40:], utt.frames[0:160])

    def test_boundary_zero_fill_right(self):
        utt = ramp_utterance(t=300)
        seg = context_pad(utt, WordAnnotation("u", 200, 290, "w"), 200)
        # wants [145, 345) but the utterance ends at 300: 45 zero rows on the right
        assert np.array_equal(seg.frames[:155], utt.frames[145:300])
        assert np.all(seg.frames[155:] == 0.0)

    def test_word_longer_than_target_truncates_from_start(self):
        utt = ramp_utterance()
        seg = context_pad(utt, WordAnnotation("u", 100, 301, "w"), 200)
        assert np.array_equal(seg.frames, utt.frames[101:301])

    def test_invalid_span(self):
        utt = ramp_utterance(t=50)
        with pytest.raises(ValueError):
            context_pad(utt, WordAnnotation("u", 10, 60, "w"), 20)
        with pytest.raises(ValueError):
            context_pad(utt, WordAnnotation("other", 0, 10, "w"), 20)


class TestZeroPad:
    def test_exact_length_is_identity(self):
        utt = ramp_utterance()
        seg = zero_pad(utt, WordAnnotation("u", 300, 500, "w"), 200)
        assert np.array_equal(seg.frames, utt.frames[300:500])

    def test_centered_zeros(self):
        utt = ramp_utterance()
        seg = zero_pad(utt, WordAnnotation("u", 500, 600, "w"), 200)
        assert np.all(seg.frames[:50] == 0.0)
        assert np.array_equal(seg.frames[50:150], utt.frames[500:600])
        assert np.all(seg.frames[150:] == 0.0)

    def test_one_frame_over_drops_first_word_frame(self):
        utt = ramp_utterance()
        seg = zero_pad(utt, WordAnnotation("u", 100, 301, "w"), 200)
        assert np.array_equal(seg.frames, utt.frames[101:301])

    def test_agrees_with_context_pad_when_word_fills_utterance(self):
        rng = np.random.default_rng(1)
        for t in (7, 20, 33):
            utt = FeatureMatrix("u", rng.normal(size=(t, 3)).astype(np.float32))
            span = WordAnnotation("u", 0, t, "w")
            a = zero_pad(utt, span, 40)
            b = context_pad(utt, span, 40)
            assert np.array_equal(a.frames, b.frames)

    def test_segments_always_have_target_rows(self):
        rng = np.random.default_rng(2)
        utt = ramp_utterance(t=120)
        for _ in range(50):
            s = int(rng.integers(0, 119))
            e = int(rng.integers(s + 1, 121))
            target = int(rng.integers(1, 80))
            span = WordAnnotation("u", s, e, "w")
            assert zero_pad(utt, span, target).frames.shape == (target, 2)
            assert context_pad(utt, span, target).frames.shape == (target, 2)


class TestCenterPad:
    def test_matches_zero_pad_semantics(self):
        frames = np.arange(12, dtype=np.float32).reshape(6, 2)
        out = center_pad_frames(frames, 10)
        assert out.shape == (10, 2)
        assert np.all(out[:2] == 0.0)
        assert np.array_equal(out[2:8], frames)
        assert np.all(out[8:] == 0.0)

    def test_truncates_long_input(self):
        frames = np.arange(22, dtype=np.float32).reshape(11, 2)
        out = center_pad_frames(frames, 10)
        assert np.array_equal(out, frames[1:11])


class TestExtractWindows:
    def test_window_arithmetic(self):
        utt = ramp_utterance(t=300)
        windows = extract_windows(utt, 200, 5)
        assert len(windows) == 21
        assert [o for o, _ in windows] == list(range(0, 101, 5))

    def test_single_window_when_exact(self):
        utt = ramp_utterance(t=200)
        windows = extract_windows(utt, 200, 5)
        assert len(windows) == 1
        assert windows[0][0] == 0
        assert np.array_equal(windows[0][1].frames, utt.frames)

    def test_short_utterance_zero_padded(self):
        utt = ramp_utterance(t=150)
        windows = extract_windows(utt, 200, 5)
        assert len(windows) == 1
        expected = zero_pad(utt, WordAnnotation("u", 0, 150, "w"), 200)
        assert np.array_equal(windows[0][1].frames, expected.frames)

    def test_windows_reproduce_utterance_rows(self):
        utt = ramp_utterance(t=97)
        for offset, seg in extract_windows(utt, 30, 7):
            assert np.array_equal(seg.frames, utt.frames[offset : offset + 30])

    def test_bad_args(self):
        utt = ramp_utterance(t=10)
        with pytest.raises(ValueError):
            extract_windows(utt, 0, 5)
        with pytest.raises(ValueError):
            extract_windows(utt, 5, 0)


def make_annotations(counts):
    anns = []
    for word, n in counts.items():
        for k in range(n):
            anns.append(WordAnnotation(f"u{word}{k}", 0, 10, word))
    return anns


class TestBuildPairs:
    def test_pair_counts(self):
        pairs = build_pairs(make_annotations({"a": 3}))
        assert len(pairs) == 3
        assert all(p.word == "a" for p in pairs)

    def test_single_instance_no_pairs(self):
        assert build_pairs(make_annotations({"a": 1})) == []

    def test_cap_with_seeded_subsample(self):
        anns = make_annotations({"a": 10})  # 45 pairs
        capped = build_pairs(anns, max_pairs_per_word=7, seed=3)
        assert len(capped) == 7
        again = build_pairs(anns, max_pairs_per_word=7, seed=3)
        assert capped == again
        other = build_pairs(anns, max_pairs_per_word=7, seed=4)
        assert len(other) == 7

    def test_duplicate_spans_collapse(self):
        ann = WordAnnotation("u", 0, 10, "a")
        assert build_pairs([ann, ann]) == []

    def test_subsample_pairs_errors_with_maximum(self):
        pairs = build_pairs(make_annotations({"a": 3}))
        with pytest.raises(ValueError, match="3"):
            subsample_pairs(pairs, 4, seed=0)
        assert len(subsample_pairs(pairs, 2, seed=0)) == 2


class TestSampleTriplets:
    def test_one_word_label_errors(self, small_corpus):
        anns = [a for a in small_corpus.annotations if a.word == small_corpus.annotations[0].word]
        pairs = build_pairs(anns)
        with pytest.raises(ValueError, match="2 distinct word labels"):
            sample_triplets(small_corpus, pairs, anns, 5, "zero", 20, seed=0)

    def test_negative_word_always_differs(self, small_corpus):
        pairs = build_pairs(small_corpus.annotations)
        triplets = sample_triplets(
            small_corpus, pairs, small_corpus.annotations, 100, "context", 20, seed=1
        )
        assert len(triplets) == 100
        for t in triplets:
            assert t.negative_word != t.anchor_word
            assert t.anchor.frames.shape == (20, 6)
            assert t.positive.frames.shape == (20, 6)
            assert t.negative.frames.shape == (20, 6)

    def test_same_seed_identical(self, small_corpus):
        pairs = build_pairs(small_corpus.annotations)
        a = sample_triplets(small_corpus, pairs, small_corpus.annotations, 20, "zero", 16, seed=7)
        b = sample_triplets(small_corpus, pairs, small_corpus.annotations, 20, "zero", 16, seed=7)
        for ta, tb in zip(a, b):
            assert ta.anchor_word == tb.anchor_word
            assert ta.negative_word == tb.negative_word
            assert np.array_equal(ta.anchor.frames, tb.anchor.frames)
            assert np.array_equal(ta.negative.frames, tb.negative.frames)

    def test_padding_kind_applied(self, small_corpus):
        pairs = build_pairs(small_corpus.annotations)
        for kind in ("context", "zero"):
            (t,) = sample_triplets(
                small_corpus, pairs, small_corpus.annotations, 1, kind, 18, seed=2
            )
            assert t.anchor.padding_kind == kind

    def test_unknown_padding_kind(self, small_corpus):
        pairs = build_pairs(small_corpus.annotations)
        with pytest.raises(ValueError, match="padding"):
            sample_triplets(small_corpus, pairs, small_corpus.annotations, 1, "mixed", 18, seed=0)
