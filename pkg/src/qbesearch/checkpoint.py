"""Model checkpoints: a little-endian table of named float32 tensors.

Layout: magic ``QBEM``, u32 version, then per tensor a u16 name length,
the UTF-8 name, a u8 rank, u32 dims and the float32 data, repeated until
end of file.  A ``meta.arch`` tensor pins the layer sizes and optional
``norm.mean``/``norm.std`` tensors carry the feature normalization the
model was trained with, so a checkpoint is self-contained for indexing
and search.
"""

import hashlib
import struct
from pathlib import Path

import numpy as np

from .corpus import FeatureNorm
from .errors import FormatError
from .network import ModelParams, NetConfig

QBEM_MAGIC = b"QBEM"
QBEM_VERSION = 1

_META_FIELDS = (
    "input_len",
    "input_dim",
    "conv1_filters",
    "conv1_width",
    "pool1",
    "conv2_filters",
    "conv2_width",
    "hidden_units",
    "embedding_dim",
)


def _tensor_table(params, norm=None):
    table = [("meta.arch", np.array([getattr(params.config, f) for f in _META_FIELDS]))]
    table.extend(params.tensors())
    if norm is not None:
        table.append(("norm.mean", norm.mean))
        table.append(("norm.std", norm.std))
    return table


def _serialize(table):
    out = [QBEM_MAGIC, struct.pack("<I", QBEM_VERSION)]
    for name, arr in table:
        data = np.ascontiguousarray(arr, dtype="<f4")
        encoded = name.encode("utf-8")
        out.append(struct.pack("<H", len(encoded)))
        out.append(encoded)
        out.append(struct.pack("<B", data.ndim))
        out.append(struct.pack(f"<{data.ndim}I", *data.shape))
        out.append(data.tobytes())
    return b"".join(out)


def save_checkpoint(params, path, norm=None):
    """Write parameters (and normalization stats, if given) to ``path``."""
    Path(path).write_bytes(_serialize(_tensor_table(params, norm)))


def params_digest(params, norm=None):
    """SHA-256 over the serialized tensor table; 32 bytes."""
    return hashlib.sha256(_serialize(_tensor_table(params, norm))).digest()


def _read_exact(fh, n, path, what):
    raw = fh.read(n)
    if len(raw) != n:
        raise FormatError(f"{path}: truncated while reading {what}")
    return raw


def load_checkpoint(path):
    """Read a checkpoint; returns (ModelParams, FeatureNorm or None)."""
    path = Path(path)
    tensors = {}
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) < 8:
            raise FormatError(f"{path}: truncated header")
        if head[:4] != QBEM_MAGIC:
            raise FormatError(f"{path}: bad magic {head[:4]!r}")
        (version,) = struct.unpack("<I", head[4:])
        if version != QBEM_VERSION:
            raise FormatError(f"{path}: unsupported checkpoint version {version}")
        while True:
            raw = fh.read(2)
            if not raw:
                break
            if len(raw) < 2:
                raise FormatError(f"{path}: truncated tensor header")
            (name_len,) = struct.unpack("<H", raw)
            name = _read_exact(fh, name_len, path, "tensor name").decode("utf-8")
            (rank,) = struct.unpack("<B", _read_exact(fh, 1, path, "tensor rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(fh, 4 * rank, path, "tensor dims"))
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            data = _read_exact(fh, 4 * count, path, f"tensor {name!r} data")
            tensors[name] = np.frombuffer(data, dtype="<f4").reshape(dims).copy()

    if "meta.arch" not in tensors:
        raise FormatError(f"{path}: missing meta.arch tensor")
    meta = tensors.pop("meta.arch")
    if meta.shape != (len(_META_FIELDS),):
        raise FormatError(f"{path}: bad meta.arch shape {meta.shape}")
    config = NetConfig(**{f: int(v) for f, v in zip(_META_FIELDS, meta)})

    norm = None
    if "norm.mean" in tensors or "norm.std" in tensors:
        if "norm.mean" not in tensors or "norm.std" not in tensors:
            raise FormatError(f"{path}: normalization tensors must come in pairs")
        norm = FeatureNorm(tensors.pop("norm.mean"), tensors.pop("norm.std"))

    kwargs = {}
    for field in ("conv1_w", "conv1_b", "conv2_w", "conv2_b", "fc1_w", "fc1_b", "fc2_w", "fc2_b"):
        name = field.replace("_", ".")
        if name not in tensors:
            raise FormatError(f"{path}: missing tensor {name!r}")
        kwargs[field] = tensors.pop(name)
    if tensors:
        raise FormatError(f"{path}: unexpected tensors {sorted(tensors)}")
    try:
        params = ModelParams(config, **kwargs)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return params, norm
