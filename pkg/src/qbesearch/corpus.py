"""Frame-level feature corpora: binary feature files, annotations, synthetic data.

A corpus is a set of utterances (T x D float32 frame matrices), word-span
annotations and a train/dev/test split per utterance.  Features live in QBEF
files (little-endian: magic ``QBEF``, u32 version, u32 T, u32 D, then T*D
float32 row-major), annotations in a TSV, and a key=value manifest ties the
files of each split together.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError

QBEF_MAGIC = b"QBEF"
QBEF_VERSION = 1

STD_FLOOR = 1e-8

SPLITS = ("train", "dev", "test")


@dataclass(eq=False)
class FeatureMatrix:
    """One utterance or query: a (T, D) float32 frame matrix plus its id."""

    utterance_id: str
    frames: np.ndarray

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float32)
        if self.frames.ndim != 2 or self.frames.shape[0] < 1 or self.frames.shape[1] < 1:
            raise ValueError(f"frames must be a non-empty 2-D matrix, got {self.frames.shape}")
        if not np.isfinite(self.frames).all():
            raise ValueError(f"non-finite values in features of {self.utterance_id!r}")

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]


@dataclass(frozen=True)
class WordAnnotation:
    """A labeled word span; start inclusive, end exclusive, in frames."""

    utterance_id: str
    start_frame: int
    end_frame: int
    word: str

    def __post_init__(self):
        if not self.word:
            raise ValueError("annotation word label must be non-empty")
        if not (0 <= self.start_frame < self.end_frame):
            raise ValueError(
                f"bad span [{self.start_frame}, {self.end_frame}) for word {self.word!r}"
            )


@dataclass
class Corpus:
    utterances: list = field(default_factory=list)
    annotations: list = field(default_factory=list)
    splits: dict = field(default_factory=dict)  # utterance_id -> train|dev|test

    def __post_init__(self):
        self._by_id = {u.utterance_id: u for u in self.utterances}

    def utterance(self, utterance_id):
        try:
            return self._by_id[utterance_id]
        except KeyError:
            raise KeyError(f"unknown utterance {utterance_id!r}") from None

    def split_utterances(self, split):
        return [u for u in self.utterances if self.splits.get(u.utterance_id) == split]

    def split_annotations(self, split):
        return [a for a in self.annotations if self.splits.get(a.utterance_id) == split]

    def validate(self):
        if len(self._by_id) != len(self.utterances):
            raise ValueError("duplicate utterance ids")
        dims = {u.dim for u in self.utterances}
        if len(dims) > 1:
            raise ValueError(f"inconsistent feature dims across corpus: {sorted(dims)}")
        for ann in self.annotations:
            utt = self.utterance(ann.utterance_id)
            if ann.end_frame > utt.num_frames:
                raise ValueError(f"annotation {ann} exceeds utterance length {utt.num_frames}")
        for uid, split in self.splits.items():
            if split not in SPLITS:
                raise ValueError(f"unknown split {split!r} for {uid!r}")
            self.utterance(uid)
        return self


# ---------------------------------------------------------------------------
# QBEF feature files


def save_features(matrix, path):
    """Write ``matrix`` to ``path`` in the QBEF binary format."""
    path = Path(path)
    t, d = matrix.frames.shape
    payload = np.ascontiguousarray(matrix.frames, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(QBEF_MAGIC)
        fh.write(struct.pack("<III", QBEF_VERSION, t, d))
        fh.write(payload)


def load_features(path, utterance_id=None):
    """Read a QBEF file; ``utterance_id`` defaults to the file stem."""
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16:
            raise FormatError(f"{path}: truncated header")
        if head[:4] != QBEF_MAGIC:
            raise FormatError(f"{path}: bad magic {head[:4]!r}")
        version, t, d = struct.unpack("<III", head[4:])
        if version != QBEF_VERSION:
            raise FormatError(f"{path}: unsupported version {version}")
        if t < 1 or d < 1:
            raise FormatError(f"{path}: bad shape {t}x{d}")
        raw = fh.read(4 * t * d + 1)
    if len(raw) != 4 * t * d:
        raise FormatError(f"{path}: expected {4 * t * d} payload bytes, found {len(raw)}")
    frames = np.frombuffer(raw, dtype="<f4").reshape(t, d)
    if not np.isfinite(frames).all():
        raise FormatError(f"{path}: non-finite feature values")
    return FeatureMatrix(utterance_id or path.stem, frames.copy())


# ---------------------------------------------------------------------------
# synthetic corpus generation


@dataclass
class SyntheticConfig:
    """Knobs for the deterministic synthetic corpus generator."""

    vocab_size: int = 20
    instances_per_word: int = 10
    feature_dim: int = 40
    word_len_range: tuple = (30, 60)
    words_per_utterance_range: tuple = (2, 5)
    noise_std: float = 0.1
    warp_range: tuple = (0.85, 1.15)
    seed: int = 0

    def __post_init__(self):
        for name in ("vocab_size", "instances_per_word", "feature_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        for name in ("word_len_range", "words_per_utterance_range", "warp_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"{name}: min {lo} exceeds max {hi}")
        if self.word_len_range[0] < 1 or self.words_per_utterance_range[0] < 1:
            raise ValueError("length ranges must start at 1 or above")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")
        if self.warp_range[0] <= 0:
            raise ValueError("warp factors must be > 0")


def _word_templates(cfg, rng):
    """One smooth trajectory per word: <= 3 random sinusoids per dimension."""
    templates = []
    lo, hi = cfg.word_len_range
    for _ in range(cfg.vocab_size):
        tlen = int(rng.integers(lo, hi + 1))
        t = np.arange(tlen) / tlen
        tpl = np.zeros((tlen, cfg.feature_dim))
        for d in range(cfg.feature_dim):
            for _ in range(int(rng.integers(1, 4))):
                amp = rng.uniform(0.3, 1.0)
                freq = rng.uniform(0.5, 2.5)
                phase = rng.uniform(0.0, 2.0 * np.pi)
                tpl[:, d] += amp * np.sin(2.0 * np.pi * freq * t + phase)
        templates.append(tpl)
    return templates


def _warp(template, factor):
    src_len = template.shape[0]
    new_len = max(2, int(round(src_len * factor)))
    pos = np.linspace(0.0, src_len - 1.0, new_len)
    idx = np.arange(src_len, dtype=np.float64)
    out = np.empty((new_len, template.shape[1]))
    for d in range(template.shape[1]):
        out[:, d] = np.interp(pos, idx, template[:, d])
    return out


def generate_synthetic(cfg, split_fractions=(0.6, 0.2, 0.2)):
    """Build a deterministic corpus of warped, noised word-template instances.

    Each word instance is its template time-stretched by a factor drawn from
    ``warp_range`` plus i.i.d. Gaussian noise; utterances concatenate
    instances back to back and annotations record the exact spans.  The same
    config always yields a bit-identical corpus.
    """
    rng = np.random.default_rng(cfg.seed)
    templates = _word_templates(cfg, rng)
    width = max(2, len(str(cfg.vocab_size - 1)))
    labels = [f"w{i:0{width}d}" for i in range(cfg.vocab_size)]

    instances = []
    for w in range(cfg.vocab_size):
        for _ in range(cfg.instances_per_word):
            factor = rng.uniform(cfg.warp_range[0], cfg.warp_range[1])
            inst = _warp(templates[w], factor)
            if cfg.noise_std > 0:
                inst = inst + rng.normal(0.0, cfg.noise_std, size=inst.shape)
            instances.append((labels[w], inst))

    order = rng.permutation(len(instances))
    lo, hi = cfg.words_per_utterance_range
    utterances = []
    annotations = []
    cursor = 0
    while cursor < len(order):
        count = int(rng.integers(lo, hi + 1))
        chunk = order[cursor : cursor + count]
        cursor += count
        uid = f"u{len(utterances):04d}"
        parts = []
        offset = 0
        for k in chunk:
            word, inst = instances[k]
            parts.append(inst)
            annotations.append(WordAnnotation(uid, offset, offset + inst.shape[0], word))
            offset += inst.shape[0]
        utterances.append(FeatureMatrix(uid, np.concatenate(parts).astype(np.float32)))

    splits = _assign_splits(len(utterances), split_fractions, rng)
    split_map = {u.utterance_id: splits[i] for i, u in enumerate(utterances)}
    return Corpus(utterances, annotations, split_map).validate()


def _assign_splits(n, fractions, rng):
    ftrain, fdev, _ = fractions
    if abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) <= 0:
        raise ValueError(f"split fractions must be positive and sum to 1, got {fractions}")
    perm = rng.permutation(n)
    n_train = max(1, int(round(n * ftrain)))
    n_dev = max(1, int(round(n * fdev)))
    if n >= 3:
        n_train = min(n_train, n - 2)
        n_dev = min(n_dev, n - n_train - 1)
    out = [""] * n
    for pos, idx in enumerate(perm):
        if pos < n_train:
            out[idx] = "train"
        elif pos < n_train + n_dev:
            out[idx] = "dev"
        else:
            out[idx] = "test"
    if n < 3:  # degenerate corpora: everything trains
        out = ["train"] * n
    return out


# ---------------------------------------------------------------------------
# feature normalization


@dataclass(eq=False)
class FeatureNorm:
    """Per-dimension mean/std computed on the training split.

    Stored float32 so the values survive a checkpoint round-trip bit-exactly.
    """

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float32)
        self.std = np.asarray(self.std, dtype=np.float32)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("normalization stats must be matching 1-D vectors")


def compute_norm_stats(utterances):
    """Global per-dimension mean/std over all frames; std floored at 1e-8."""
    if not utterances:
        raise ValueError("cannot compute normalization stats from an empty training set")
    stacked = np.concatenate([u.frames for u in utterances]).astype(np.float64)
    mean = stacked.mean(axis=0)
    std = np.maximum(stacked.std(axis=0), STD_FLOOR)
    return FeatureNorm(mean, std)


def apply_norm(matrix, norm):
    if matrix.dim != norm.mean.shape[0]:
        raise ValueError(f"feature dim {matrix.dim} does not match stats dim {norm.mean.shape[0]}")
    frames = (matrix.frames.astype(np.float64) - norm.mean) / norm.std
    return FeatureMatrix(matrix.utterance_id, frames.astype(np.float32))


def normalize_corpus(corpus, norm):
    utts = [apply_norm(u, norm) for u in corpus.utterances]
    return Corpus(utts, list(corpus.annotations), dict(corpus.splits))


# ---------------------------------------------------------------------------
# corpus directory layout: manifest, annotations, queries


ANNOTATION_HEADER = "utterance_id\tstart_frame\tend_frame\tword"
QUERY_HEADER = "query_id\tpath\tword"


def save_annotations(annotations, path):
    lines = [ANNOTATION_HEADER]
    for a in annotations:
        lines.append(f"{a.utterance_id}\t{a.start_frame}\t{a.end_frame}\t{a.word}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_annotations(path):
    text = Path(path).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0] != ANNOTATION_HEADER:
        raise FormatError(f"{path}: missing annotation header")
    out = []
    for ln in lines[1:]:
        cols = ln.split("\t")
        if len(cols) != 4:
            raise FormatError(f"{path}: expected 4 columns, got {len(cols)}: {ln!r}")
        out.append(WordAnnotation(cols[0], int(cols[1]), int(cols[2]), cols[3]))
    return out


def save_corpus(corpus, out_dir):
    """Write features/, annotations.tsv and manifest.txt under ``out_dir``."""
    out_dir = Path(out_dir)
    feat_dir = out_dir / "features"
    feat_dir.mkdir(parents=True, exist_ok=True)
    lines = ["# corpus manifest", "version=1", "annotations=annotations.tsv"]
    for u in corpus.utterances:
        rel = f"features/{u.utterance_id}.qbef"
        save_features(u, out_dir / rel)
        lines.append(f"{corpus.splits[u.utterance_id]}={rel}")
    save_annotations(corpus.annotations, out_dir / "annotations.tsv")
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out_dir / "manifest.txt"


def load_corpus(manifest_path):
    """Read a corpus back from a manifest file (or a directory holding one)."""
    manifest_path = Path(manifest_path)
    if manifest_path.is_dir():
        manifest_path = manifest_path / "manifest.txt"
    base = manifest_path.parent
    utterances, splits = [], {}
    annotations_path = None
    for ln in manifest_path.read_text(encoding="utf-8").splitlines():
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        key, _, value = ln.partition("=")
        if not value:
            raise FormatError(f"{manifest_path}: malformed line {ln!r}")
        if key == "version":
            if value != "1":
                raise FormatError(f"{manifest_path}: unsupported manifest version {value}")
        elif key == "annotations":
            annotations_path = base / value
        elif key in SPLITS:
            m = load_features(base / value)
            utterances.append(m)
            splits[m.utterance_id] = key
        else:
            raise FormatError(f"{manifest_path}: unknown manifest key {key!r}")
    annotations = load_annotations(annotations_path) if annotations_path else []
    return Corpus(utterances, annotations, splits).validate()


def select_queries(corpus, per_word, seed, split="dev"):
    """Cut query instances out of ``split`` utterances, up to ``per_word`` each.

    Returns (query_id, FeatureMatrix, word) triples over raw features; the
    subsample per word is seeded and deterministic.
    """
    rng = np.random.default_rng([seed, 0xC0DE])
    by_word = {}
    for ann in corpus.split_annotations(split):
        by_word.setdefault(ann.word, []).append(ann)
    queries = []
    for word in sorted(by_word):
        anns = by_word[word]
        take = min(per_word, len(anns))
        chosen = sorted(rng.choice(len(anns), size=take, replace=False).tolist())
        for k in chosen:
            ann = anns[k]
            frames = corpus.utterance(ann.utterance_id).frames[ann.start_frame : ann.end_frame]
            qid = f"q{len(queries):04d}_{word}"
            queries.append((qid, FeatureMatrix(qid, frames.copy()), word))
    return queries


def save_queries(queries, out_dir, manifest_name="queries.tsv"):
    out_dir = Path(out_dir)
    qdir = out_dir / "queries"
    qdir.mkdir(parents=True, exist_ok=True)
    lines = [QUERY_HEADER]
    for qid, mat, word in queries:
        rel = f"queries/{qid}.qbef"
        save_features(mat, out_dir / rel)
        lines.append(f"{qid}\t{rel}\t{word}")
    path = out_dir / manifest_name
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def load_queries(manifest_path):
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    lines = [ln for ln in manifest_path.read_text(encoding="utf-8").splitlines() if ln.strip()]
    if not lines or lines[0] != QUERY_HEADER:
        raise FormatError(f"{manifest_path}: missing query manifest header")
    out = []
    for ln in lines[1:]:
        cols = ln.split("\t")
        if len(cols) != 3:
            raise FormatError(f"{manifest_path}: expected 3 columns: {ln!r}")
        qid, rel, word = cols
        out.append((qid, load_features(base / rel, utterance_id=qid), word))
    return out
