"""Search-content indexing: one embedding per analysis window, persisted.

The index file (QBEI) is little-endian: magic, u32 version, u32 window_len,
u32 shift, u32 embedding dim, a 32-byte checkpoint hash, u32 utterance
count, then per utterance its id (u16 length + UTF-8), u32 window count,
the u32 window offsets and the float32 embedding rows.
"""

import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError
from .network import _forward_batch
from .segmenter import extract_windows

QBEI_MAGIC = b"QBEI"
QBEI_VERSION = 1

_EMBED_CHUNK = 256


@dataclass(eq=False)
class IndexEntry:
    utterance_id: str
    offsets: np.ndarray  # u32, strictly increasing by the shift
    embeddings: np.ndarray  # (num_windows, dim) float32

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.uint32)
        self.embeddings = np.asarray(self.embeddings, dtype=np.float32)
        if self.embeddings.ndim != 2 or self.embeddings.shape[0] != self.offsets.shape[0]:
            raise ValueError(
                f"{self.utterance_id}: {self.offsets.shape[0]} offsets vs "
                f"{self.embeddings.shape} embeddings"
            )


@dataclass(eq=False)
class EmbeddingIndex:
    window_len: int
    shift: int
    dim: int
    checkpoint_hash: bytes = b"\x00" * 32
    entries: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.checkpoint_hash) != 32:
            raise ValueError("checkpoint hash must be 32 bytes")

    def entry(self, utterance_id):
        for e in self.entries:
            if e.utterance_id == utterance_id:
                return e
        raise KeyError(f"utterance {utterance_id!r} not in index")

    @property
    def num_rows(self):
        return sum(e.embeddings.shape[0] for e in self.entries)


def _embed_utterance(params, utterance, window_len, shift):
    windows = extract_windows(utterance, window_len, shift)
    offsets = np.array([o for o, _ in windows], dtype=np.uint32)
    rows = []
    for i in range(0, len(windows), _EMBED_CHUNK):
        chunk = np.stack([seg.frames for _, seg in windows[i : i + _EMBED_CHUNK]])
        emb, _ = _forward_batch(params, chunk)
        rows.append(emb.astype(params.dtype))
    return IndexEntry(utterance.utterance_id, offsets, np.concatenate(rows))


def build_index(params, utterances, window_len, shift, checkpoint_hash=b"\x00" * 32, jobs=1):
    """Embed every analysis window of every utterance.

    Entries come out ordered as the utterances were given regardless of the
    worker count, so rebuilding an index is bit-reproducible.
    """
    c = params.config
    for u in utterances:
        if u.dim != c.input_dim:
            raise ValueError(
                f"{u.utterance_id}: feature dim {u.dim} does not match model dim {c.input_dim}"
            )
    if window_len != c.input_len:
        raise ValueError(
            f"window_len {window_len} does not match the model input length {c.input_len}"
        )
    if jobs > 1 and len(utterances) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            entries = list(
                pool.map(lambda u: _embed_utterance(params, u, window_len, shift), utterances)
            )
    else:
        entries = [_embed_utterance(params, u, window_len, shift) for u in utterances]
    dim = c.embedding_dim
    return EmbeddingIndex(window_len, shift, dim, checkpoint_hash, entries)


def save_index(index, path):
    out = [
        QBEI_MAGIC,
        struct.pack(
            "<IIII", QBEI_VERSION, index.window_len, index.shift, index.dim
        ),
        index.checkpoint_hash,
        struct.pack("<I", len(index.entries)),
    ]
    for e in index.entries:
        encoded = e.utterance_id.encode("utf-8")
        out.append(struct.pack("<H", len(encoded)))
        out.append(encoded)
        out.append(struct.pack("<I", e.offsets.shape[0]))
        out.append(np.ascontiguousarray(e.offsets, dtype="<u4").tobytes())
        out.append(np.ascontiguousarray(e.embeddings, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(out))


def _read_exact(fh, n, path, what):
    raw = fh.read(n)
    if len(raw) != n:
        raise FormatError(f"{path}: truncated while reading {what}")
    return raw


def load_index(path):
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head != QBEI_MAGIC:
            raise FormatError(f"{path}: bad magic {head!r}")
        version, window_len, shift, dim = struct.unpack("<IIII", _read_exact(fh, 16, path, "header"))
        if version != QBEI_VERSION:
            raise FormatError(f"{path}: unsupported index version {version}")
        chash = _read_exact(fh, 32, path, "checkpoint hash")
        (count,) = struct.unpack("<I", _read_exact(fh, 4, path, "utterance count"))
        entries = []
        for _ in range(count):
            (name_len,) = struct.unpack("<H", _read_exact(fh, 2, path, "utterance id length"))
            uid = _read_exact(fh, name_len, path, "utterance id").decode("utf-8")
            (windows,) = struct.unpack("<I", _read_exact(fh, 4, path, "window count"))
            offsets = np.frombuffer(
                _read_exact(fh, 4 * windows, path, "offsets"), dtype="<u4"
            ).copy()
            emb = np.frombuffer(
                _read_exact(fh, 4 * windows * dim, path, "embeddings"), dtype="<f4"
            ).reshape(windows, dim).copy()
            entries.append(IndexEntry(uid, offsets, emb))
        if fh.read(1):
            raise FormatError(f"{path}: trailing bytes after last utterance")
    return EmbeddingIndex(window_len, shift, dim, chash, entries)
