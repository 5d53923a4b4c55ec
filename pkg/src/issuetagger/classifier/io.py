"""Versioned binary model format.

All integers and floats are little-endian::

    magic            4 bytes  b"ITGM"
    version          u16      (currently 1)
    config           u32 length + UTF-8 JSON
    labels           u32 count, then per label: u32 length + UTF-8 name, u64 training count
    vocabulary       u32 min_count, u32 count, then per word (id order): u32 length + UTF-8, u64 count
    A header         u64 num_rows, u32 dim, u64 init seed, u64 stored rows
    A row ids        u64 * stored rows (strictly increasing)
    A values         f32 * stored rows * dim (row-major)
    B values         f32 * dim * n_labels (row-major, shape dim x n_labels)

Rows of A that are not stored hold their seeded initial value (see
``EmbeddingTable``).
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .model import EmbeddingTable, Model
from .vocab import Vocabulary

MAGIC = b"ITGM"
FORMAT_VERSION = 1
_MASK64 = (1 << 64) - 1


class ModelFormatError(ValueError):
    """Base class for unreadable model files."""


class BadMagicError(ModelFormatError):
    pass


class UnsupportedVersionError(ModelFormatError):
    pass


class TruncatedPayloadError(ModelFormatError):
    pass


def _pack_str(s: str) -> bytes:
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def dumps(model: Model) -> bytes:
    parts = [MAGIC, struct.pack("<H", FORMAT_VERSION)]
    cfg = model.config.to_json().encode("utf-8")
    parts += [struct.pack("<I", len(cfg)), cfg]
    parts.append(struct.pack("<I", len(model.labels)))
    for label, count in zip(model.labels, model.label_counts):
        parts += [_pack_str(label), struct.pack("<Q", count)]
    vocab = model.vocab
    parts.append(struct.pack("<II", vocab.min_count, len(vocab)))
    for word in vocab.words:
        parts += [_pack_str(word), struct.pack("<Q", vocab.counts[word])]
    A = model.A
    parts.append(struct.pack("<QIQQ", A.num_rows, A.dim, A.seed & _MASK64, len(A.ids)))
    parts.append(A.ids.astype("<u8").tobytes())
    parts.append(np.ascontiguousarray(A.weights, dtype="<f4").tobytes())
    parts.append(np.ascontiguousarray(model.B, dtype="<f4").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedPayloadError(
                f"truncated payload: needed {n} bytes at offset {self.pos}, file has {len(self.data)}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def string(self) -> str:
        (n,) = self.unpack("<I")
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelFormatError(f"invalid UTF-8 at offset {self.pos - n}") from exc

    def array(self, dtype: str, count: int) -> np.ndarray:
        item = np.dtype(dtype).itemsize
        return np.frombuffer(self.take(item * count), dtype=dtype).copy()


def loads(data: bytes) -> Model:
    r = _Reader(data)
    if len(data) < len(MAGIC):
        raise TruncatedPayloadError(f"truncated payload: {len(data)} bytes, no header")
    magic = r.take(4)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    (version,) = r.unpack("<H")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unknown format version {version} (supported: {FORMAT_VERSION})")
    (n,) = r.unpack("<I")
    block = r.take(n)
    try:
        config = TrainConfig.from_dict(json.loads(block.decode("utf-8")))
    except (UnicodeDecodeError, json.JSONDecodeError, TypeError, ValueError) as exc:
        raise ModelFormatError(f"invalid config block: {exc}") from exc
    (n_labels,) = r.unpack("<I")
    labels, label_counts = [], []
    for _ in range(n_labels):
        labels.append(r.string())
        label_counts.append(r.unpack("<Q")[0])
    min_count, n_words = r.unpack("<II")
    counts = {}
    for _ in range(n_words):
        word = r.string()
        counts[word] = r.unpack("<Q")[0]
    vocab = Vocabulary(word_to_id={w: i for i, w in enumerate(counts)}, counts=counts, min_count=min_count)
    num_rows, dim, seed, stored = r.unpack("<QIQQ")
    ids = r.array("<u8", stored).astype(np.int64)
    weights = r.array("<f4", stored * dim).astype(np.float32).reshape(stored, dim)
    B = r.array("<f4", dim * n_labels).astype(np.float32).reshape(dim, n_labels)
    if r.pos != len(data):
        raise ModelFormatError(f"{len(data) - r.pos} unexpected trailing bytes")
    try:
        A = EmbeddingTable(num_rows, dim, seed, ids, weights)
        model = Model(tuple(labels), vocab, A, B, config, tuple(label_counts))
    except ValueError as exc:
        raise ModelFormatError(f"inconsistent model: {exc}") from exc
    weights.flags.writeable = False
    B.flags.writeable = False
    return model


def save(model: Model, path: str | os.PathLike) -> int:
    """Write the model; returns the file size in bytes."""
    data = dumps(model)
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)
    return len(data)


def load(path: str | os.PathLike) -> Model:
    return loads(Path(path).read_bytes())


def fingerprint(model: Model) -> str:
    """SHA-256 of the serialised model, equal to the hash of its saved file."""
    return hashlib.sha256(dumps(model)).hexdigest()
