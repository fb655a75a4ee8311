"""Embedding matrices, the ``CLSB`` file format and the hashed stub encoder.

File layout (all little-endian)::

    b"CLSB" | version u16 | n_rows u64 | dim u32 | n_rows*dim float32 (row-major)

The stub encoder replaces a transformer at desk scale. Every unigram and
every adjacent bigram is hashed with 64-bit FNV-1a over
``seed(u64 LE) || token`` (bigrams: ``seed || tok1 || 0x1F || tok2``); the
hash modulo ``dim`` picks the slot and bit 32 picks the sign (set -> -1).
The signed counts are L2-normalised.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "EmbeddingMatrix",
    "EmbeddingFormatError",
    "BadMagicError",
    "UnsupportedVersionError",
    "TruncatedFileError",
    "NonFiniteValueError",
    "DimensionMismatchError",
    "concat_layers",
    "mean_layers",
    "write_embeddings",
    "read_embeddings",
    "fnv1a_64",
    "stub_encode",
    "stub_encode_many",
]

MAGIC = b"CLSB"
VERSION = 1
_HEADER = struct.Struct("<4sHQI")
_LE_F32 = np.dtype("<f4")

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1
_BIGRAM_SEP = b"\x1f"


class EmbeddingFormatError(ValueError):
    """Base class for problems loading a ``CLSB`` file."""


class BadMagicError(EmbeddingFormatError):
    pass


class UnsupportedVersionError(EmbeddingFormatError):
    pass


class TruncatedFileError(EmbeddingFormatError):
    pass


class NonFiniteValueError(EmbeddingFormatError):
    pass


class DimensionMismatchError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class EmbeddingMatrix:
    """Dense ``(n_rows, dim)`` float32 matrix of per-sample vectors.

    The wrapped array is made read-only; build a new matrix to change it.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ValueError(f"embedding matrix must be 2-D, got shape {v.shape}")
        if v.shape[1] < 1:
            raise ValueError("embedding dim must be >= 1")
        v = np.array(v, dtype=np.float32, order="C", copy=True)
        if not np.isfinite(v).all():
            raise ValueError("embedding values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self.values
        return self.values.astype(dtype)

    def __len__(self) -> int:
        return self.n_rows

    def __eq__(self, other):
        if not isinstance(other, EmbeddingMatrix):
            return NotImplemented
        return self.values.shape == other.values.shape and self.values.tobytes() == other.values.tobytes()

    def __repr__(self):
        return f"EmbeddingMatrix(n_rows={self.n_rows}, dim={self.dim})"


def _check_stack(layers: Sequence[EmbeddingMatrix]) -> None:
    if len(layers) == 0:
        raise ValueError("layer stack must contain at least one layer")
    n = layers[0].n_rows
    for i, layer in enumerate(layers):
        if layer.n_rows != n:
            raise DimensionMismatchError(
                f"layer {i} has {layer.n_rows} rows, expected {n} (rows of layer 0)"
            )


def concat_layers(layers: Sequence[EmbeddingMatrix]) -> EmbeddingMatrix:
    """Concatenate per-layer vectors row by row, preserving layer order."""
    _check_stack(layers)
    return EmbeddingMatrix(np.concatenate([layer.values for layer in layers], axis=1))


def mean_layers(layers: Sequence[EmbeddingMatrix]) -> EmbeddingMatrix:
    """Element-wise mean of the layers (alternative to concatenation).

    All layers must share both ``n_rows`` and ``dim``.
    """
    _check_stack(layers)
    d = layers[0].dim
    for i, layer in enumerate(layers):
        if layer.dim != d:
            raise DimensionMismatchError(f"layer {i} has dim {layer.dim}, expected {d}")
    acc = np.zeros_like(layers[0].values, dtype=np.float64)
    for layer in layers:
        acc += layer.values
    return EmbeddingMatrix(acc / len(layers))


def write_embeddings(m: EmbeddingMatrix, path: "str | Path") -> None:
    header = _HEADER.pack(MAGIC, VERSION, m.n_rows, m.dim)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(m.values.astype(_LE_F32, copy=False).tobytes(order="C"))


def read_embeddings(path: "str | Path") -> EmbeddingMatrix:
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a CLSB file (magic {data[:4]!r})")
    if len(data) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated ({len(data)} bytes)")
    _, version, n_rows, dim = _HEADER.unpack_from(data)
    if version != VERSION:
        raise UnsupportedVersionError(f"{path}: unsupported CLSB version {version}")
    if dim < 1:
        raise EmbeddingFormatError(f"{path}: dim must be >= 1, got {dim}")
    expected = _HEADER.size + 4 * n_rows * dim
    if len(data) < expected:
        raise TruncatedFileError(f"{path}: payload truncated ({len(data)} of {expected} bytes)")
    if len(data) > expected:
        raise EmbeddingFormatError(f"{path}: {len(data) - expected} trailing bytes")
    values = np.frombuffer(data, dtype=_LE_F32, count=n_rows * dim, offset=_HEADER.size)
    values = values.reshape(n_rows, dim)
    if not np.isfinite(values).all():
        bad = int(np.flatnonzero(~np.isfinite(values).all(axis=1))[0])
        raise NonFiniteValueError(f"{path}: non-finite value in row {bad}")
    return EmbeddingMatrix(values)


def fnv1a_64(data: bytes, h: int = FNV_OFFSET) -> int:
    for byte in data:
        h ^= byte
        h = (h * FNV_PRIME) & _MASK64
    return h


@lru_cache(maxsize=1024)
def _seed_state(seed: int) -> int:
    return fnv1a_64((seed & _MASK64).to_bytes(8, "little"))


@lru_cache(maxsize=1 << 18)
def _feature_hash(seed: int, feature: bytes) -> int:
    # the FNV state after the seed bytes is shared by every feature
    return fnv1a_64(feature, _seed_state(seed))


def _slot_and_sign(h: int, dim: int) -> tuple[int, float]:
    return h % dim, -1.0 if (h >> 32) & 1 else 1.0


def stub_encode(tokens: Sequence[str], dim: int, seed: int) -> np.ndarray:
    """Signed hashed unigram+bigram counts, L2-normalised (float32).

    An empty token list gives the zero vector.
    """
    if dim < 1:
        raise ValueError("dim must be >= 1")
    vec = np.zeros(dim, dtype=np.float64)
    encoded = [t.encode("utf-8") for t in tokens]
    for tok in encoded:
        slot, sign = _slot_and_sign(_feature_hash(seed, tok), dim)
        vec[slot] += sign
    for a, b in zip(encoded, encoded[1:]):
        slot, sign = _slot_and_sign(_feature_hash(seed, a + _BIGRAM_SEP + b), dim)
        vec[slot] += sign
    norm = np.sqrt(np.dot(vec, vec))
    if norm > 0:
        vec /= norm
    return vec.astype(np.float32)


def stub_encode_many(token_lists: Sequence[Sequence[str]], dim: int, seed: int) -> EmbeddingMatrix:
    out = np.zeros((len(token_lists), dim), dtype=np.float32)
    for i, tokens in enumerate(token_lists):
        out[i] = stub_encode(tokens, dim, seed)
    return EmbeddingMatrix(out)
