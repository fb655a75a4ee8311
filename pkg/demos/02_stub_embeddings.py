"""Signed feature hashing as a stand-in for transformer sentence vectors.

The stub maps unigrams and bigrams to one of ``dim`` slots with a +-1 sign,
then L2-normalises. It is deterministic in (tokens, dim, seed), which is all
the downstream learners need.
"""
from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from clsboost.embedio import concat_layers, read_embeddings, stub_encode, stub_encode_many, write_embeddings

v = stub_encode(["tested", "positive", "today"], dim=16, seed=0)
print("vector:", np.round(v, 3))
print("norm:  ", float(np.linalg.norm(v)))

# word order matters through the bigrams
a = stub_encode(["a", "b"], dim=64, seed=7)
b = stub_encode(["b", "a"], dim=64, seed=7)
print("ab == ba ?", bool(np.array_equal(a, b)))

m = stub_encode_many([["i", "tested", "positive"], ["friend", "tested", "positive"], []], dim=32, seed=0)
print("matrix:", m)

# CLSB files: magic, version, rows, dim, then little-endian float32
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "x.clsb"
    write_embeddings(m, path)
    print("file bytes:", path.stat().st_size, "=", 18, "+", m.n_rows * m.dim * 4)
    assert read_embeddings(path) == m

# several encoder layers can be pooled by concatenation
print("concat of 3 layers:", concat_layers([m, m, m]).dim)
