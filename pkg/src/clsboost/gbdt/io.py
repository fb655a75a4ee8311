"""``GBDT`` model file (little-endian, version 1).

::

    b"GBDT" | version u16
    config_len u32 | config JSON (UTF-8, sorted keys)
    n_features u32 | max_bins u32
    per feature: n_thresholds u32 | float32 thresholds
    base_score f64
    n_trees u32
    per tree: n_nodes u32, then nodes in pre-order:
        leaf:     u8 1 | value f64
        internal: u8 0 | feature u32 | threshold_bin u32 | default_left u8

Children are implied by pre-order: an internal node's left subtree follows
it immediately, its right subtree follows the left one.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .binning import BinMapper
from .booster import GBDTConfig, GBDTModel
from .grower import Tree

__all__ = ["save_model", "load_model", "dumps_model", "loads_model", "ModelFormatError", "MAGIC"]

MAGIC = b"GBDT"
VERSION = 1


class ModelFormatError(ValueError):
    pass


def dumps_model(model: GBDTModel) -> bytes:
    out = bytearray()
    out += MAGIC + struct.pack("<H", VERSION)
    cfg = json.dumps(model.config.to_dict(), sort_keys=True).encode("utf-8")
    out += struct.pack("<I", len(cfg)) + cfg
    mapper = model.bin_mapper
    out += struct.pack("<II", mapper.n_features, mapper.max_bins)
    for thr in mapper.thresholds:
        out += struct.pack("<I", thr.size) + np.asarray(thr, dtype="<f4").tobytes()
    out += struct.pack("<d", model.base_score)
    out += struct.pack("<I", len(model.trees))
    for tree in model.trees:
        out += struct.pack("<I", tree.n_nodes)
        for i in range(tree.n_nodes):
            if tree.feature[i] < 0:
                out += struct.pack("<Bd", 1, float(tree.value[i]))
            else:
                out += struct.pack(
                    "<BIIB", 0, int(tree.feature[i]), int(tree.threshold_bin[i]), int(tree.default_left[i])
                )
    return bytes(out)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise ModelFormatError("model file truncated")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals

    def raw(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ModelFormatError("model file truncated")
        b = self.data[self.pos:self.pos + n]
        self.pos += n
        return b


def _read_tree(r: _Reader, n_features: int) -> Tree:
    (n_nodes,) = r.take("<I")
    nodes = []
    for _ in range(n_nodes):
        (kind,) = r.take("<B")
        if kind == 1:
            (value,) = r.take("<d")
            nodes.append({"value": value})
        elif kind == 0:
            f, b, dl = r.take("<IIB")
            if f >= n_features:
                raise ModelFormatError(f"split feature {f} out of range")
            nodes.append({"feature": f, "bin": b, "default_left": dl})
        else:
            raise ModelFormatError(f"bad node kind {kind}")
    _link_preorder(nodes)
    return Tree.from_nodes(nodes)


def _link_preorder(nodes: list[dict]) -> None:
    def walk(i: int) -> int:
        # returns the index just past the subtree rooted at i
        if i >= len(nodes):
            raise ModelFormatError("tree node list ends inside a subtree")
        if "feature" not in nodes[i]:
            return i + 1
        nodes[i]["left"] = i + 1
        after_left = walk(i + 1)
        nodes[i]["right"] = after_left
        return walk(after_left)

    if not nodes:
        raise ModelFormatError("empty tree")
    end = walk(0)
    if end != len(nodes):
        raise ModelFormatError("trailing nodes after tree")


def loads_model(data: bytes) -> GBDTModel:
    if data[:4] != MAGIC:
        raise ModelFormatError(f"not a GBDT model (magic {data[:4]!r})")
    r = _Reader(data)
    r.raw(4)
    (version,) = r.take("<H")
    if version != VERSION:
        raise ModelFormatError(f"unsupported GBDT model version {version}")
    (cfg_len,) = r.take("<I")
    config = GBDTConfig.from_dict(json.loads(r.raw(cfg_len).decode("utf-8")))
    n_features, max_bins = r.take("<II")
    thresholds = []
    for _ in range(n_features):
        (k,) = r.take("<I")
        thresholds.append(np.frombuffer(r.raw(4 * k), dtype="<f4").astype(np.float32))
    (base_score,) = r.take("<d")
    (n_trees,) = r.take("<I")
    trees = [_read_tree(r, n_features) for _ in range(n_trees)]
    if r.pos != len(data):
        raise ModelFormatError("trailing bytes after model")
    return GBDTModel(base_score, trees, BinMapper(tuple(thresholds), max_bins), config)


def save_model(model: GBDTModel, path: "str | Path") -> None:
    Path(path).write_bytes(dumps_model(model))


def load_model(path: "str | Path") -> GBDTModel:
    return loads_model(Path(path).read_bytes())
