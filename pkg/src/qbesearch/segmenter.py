"""Fixed-length segment construction and triplet sampling.

Words are brought to a common length either by temporal-context padding
(real neighboring frames from the same utterance, zeros only where the
utterance runs out) or by zero padding.  Search content is cut into
overlapping analysis windows.  Training examples are (anchor, positive,
negative) triples of such segments.
"""

from dataclasses import dataclass
from itertools import combinations

import numpy as np

PAD_KINDS = ("context", "zero")


@dataclass(eq=False)
class Segment:
    """Exactly target_len rows; offset is the source frame of row 0's span."""

    frames: np.ndarray
    utterance_id: str
    offset: int
    padding_kind: str


@dataclass(eq=False)
class SegmentTriplet:
    anchor: Segment
    positive: Segment
    negative: Segment
    anchor_word: str
    negative_word: str


@dataclass(frozen=True)
class WordPair:
    """Two distinct instances of the same word label."""

    first: object
    second: object

    @property
    def word(self):
        return self.first.word


def _pad_amounts(word_len, target_len):
    # floor on the left, ceil on the right; negative amounts mean truncation
    left = (target_len - word_len) // 2
    right = (target_len - word_len) - left
    return left, right


def _check_span(utterance, span, target_len):
    if target_len < 1:
        raise ValueError(f"target_len must be >= 1, got {target_len}")
    if span.utterance_id != utterance.utterance_id:
        raise ValueError(
            f"span for {span.utterance_id!r} applied to {utterance.utterance_id!r}"
        )
    if span.end_frame > utterance.num_frames:
        raise ValueError(f"span {span} exceeds utterance length {utterance.num_frames}")


def _truncated_word(frames, start, end, left, right):
    return frames[start - left : end + right].copy()


def center_pad_frames(frames, target_len):
    """Center raw frames in ``target_len`` rows of zeros (or center-truncate)."""
    if target_len < 1:
        raise ValueError(f"target_len must be >= 1, got {target_len}")
    t = frames.shape[0]
    left, right = _pad_amounts(t, target_len)
    if left < 0:
        return _truncated_word(frames, 0, t, left, right)
    dim = frames.shape[1]
    return np.concatenate(
        [
            np.zeros((left, dim), dtype=frames.dtype),
            frames,
            np.zeros((right, dim), dtype=frames.dtype),
        ]
    )


def zero_pad(utterance, span, target_len):
    """Center the word span in ``target_len`` rows of zeros."""
    _check_span(utterance, span, target_len)
    start, end = span.start_frame, span.end_frame
    left, right = _pad_amounts(end - start, target_len)
    dim = utterance.dim
    if left < 0:
        rows = _truncated_word(utterance.frames, start, end, left, right)
    else:
        rows = np.concatenate(
            [
                np.zeros((left, dim), dtype=utterance.frames.dtype),
                utterance.frames[start:end],
                np.zeros((right, dim), dtype=utterance.frames.dtype),
            ]
        )
    return Segment(rows, utterance.utterance_id, start, "zero")


def context_pad(utterance, span, target_len):
    """Center the word span among its real neighboring frames.

    The left context takes floor((target-W)/2) frames immediately before the
    span and the right context the remaining frames after it; zeros fill
    whatever the utterance boundary cuts off, at the outer edge.
    """
    _check_span(utterance, span, target_len)
    start, end = span.start_frame, span.end_frame
    left, right = _pad_amounts(end - start, target_len)
    if left < 0:
        rows = _truncated_word(utterance.frames, start, end, left, right)
        return Segment(rows, utterance.utterance_id, start, "context")
    t = utterance.num_frames
    lo = max(0, start - left)
    hi = min(t, end + right)
    dim = utterance.dim
    rows = np.concatenate(
        [
            np.zeros((lo - (start - left), dim), dtype=utterance.frames.dtype),
            utterance.frames[lo:hi],
            np.zeros(((end + right) - hi, dim), dtype=utterance.frames.dtype),
        ]
    )
    return Segment(rows, utterance.utterance_id, start, "context")


def pad_segment(utterance, span, target_len, kind):
    if kind == "context":
        return context_pad(utterance, span, target_len)
    if kind == "zero":
        return zero_pad(utterance, span, target_len)
    raise ValueError(f"unknown padding kind {kind!r}")


def extract_windows(utterance, window_len, shift):
    """All analysis windows of an utterance as (offset, Segment) pairs.

    Offsets run 0, shift, 2*shift, ... while a full window fits; an
    utterance shorter than the window yields one centered zero-padded
    window at offset 0.
    """
    if window_len < 1 or shift < 1:
        raise ValueError("window_len and shift must be >= 1")
    t = utterance.num_frames
    if t < window_len:
        rows = center_pad_frames(utterance.frames, window_len)
        return [(0, Segment(rows, utterance.utterance_id, 0, "window"))]
    out = []
    for offset in range(0, t - window_len + 1, shift):
        rows = utterance.frames[offset : offset + window_len].copy()
        out.append((offset, Segment(rows, utterance.utterance_id, offset, "window")))
    return out


def build_pairs(annotations, max_pairs_per_word=None, seed=0):
    """All unordered same-word instance pairs, optionally capped per word.

    The cap subsamples with a seeded generator so pair sets are
    reproducible.  Annotations with identical (utterance, span) are treated
    as one instance.
    """
    by_word = {}
    for ann in annotations:
        key = (ann.utterance_id, ann.start_frame, ann.end_frame)
        by_word.setdefault(ann.word, {})[key] = ann
    rng = np.random.default_rng(seed)
    pairs = []
    for word in sorted(by_word):
        instances = list(by_word[word].values())
        word_pairs = [WordPair(a, b) for a, b in combinations(instances, 2)]
        if max_pairs_per_word is not None and len(word_pairs) > max_pairs_per_word:
            keep = rng.choice(len(word_pairs), size=max_pairs_per_word, replace=False)
            word_pairs = [word_pairs[i] for i in sorted(keep.tolist())]
        pairs.extend(word_pairs)
    return pairs


def subsample_pairs(pairs, count, seed):
    """A seeded subset of ``count`` pairs; errors if more are asked than exist."""
    if count > len(pairs):
        raise ValueError(f"requested {count} pairs but only {len(pairs)} are available")
    if count == len(pairs):
        return list(pairs)
    rng = np.random.default_rng([seed, 0x9A125])
    keep = rng.choice(len(pairs), size=count, replace=False)
    return [pairs[i] for i in sorted(keep.tolist())]


def sample_triplets(corpus, pairs, annotations, count, padding_kind, target_len, seed):
    """Draw ``count`` training triplets from word pairs.

    Each triplet takes one pair as (anchor, positive) with random
    orientation and a uniformly drawn instance of a *different* word as the
    negative; all three segments get the same padding.  Fully deterministic
    given ``seed`` (which may be a scalar or a sequence, e.g. [seed, epoch]).
    """
    if padding_kind not in PAD_KINDS:
        raise ValueError(f"unknown padding kind {padding_kind!r}")
    if not pairs:
        raise ValueError("no word pairs available for triplet sampling")
    anns = list(annotations)
    if len({a.word for a in anns}) < 2:
        raise ValueError("triplet sampling needs at least 2 distinct word labels")
    rng = np.random.default_rng(seed)
    triplets = []
    for _ in range(count):
        pair = pairs[int(rng.integers(len(pairs)))]
        a_ann, p_ann = (pair.first, pair.second) if rng.integers(2) == 0 else (pair.second, pair.first)
        while True:
            n_ann = anns[int(rng.integers(len(anns)))]
            if n_ann.word != a_ann.word:
                break
        anchor = pad_segment(corpus.utterance(a_ann.utterance_id), a_ann, target_len, padding_kind)
        positive = pad_segment(corpus.utterance(p_ann.utterance_id), p_ann, target_len, padding_kind)
        negative = pad_segment(corpus.utterance(n_ann.utterance_id), n_ann, target_len, padding_kind)
        triplets.append(SegmentTriplet(anchor, positive, negative, a_ann.word, n_ann.word))
    return triplets
