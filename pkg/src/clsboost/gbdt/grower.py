"""Leaf-wise (best-first) growth of one regression tree on binned data."""
from __future__ import annotations

import heapq
from dataclasses import dataclass
from typing import Optional

import numba
import numpy as np

from .histogram import build_histogram, subtract_histogram
from .splitting import best_split, leaf_value

__all__ = ["Tree", "grow_tree", "predict_tree_binned"]


@dataclass(eq=False)
class Tree:
    """Flat pre-order node arrays; ``feature == -1`` marks a leaf.

    Internal nodes route a sample left when its bin code is ``<= threshold_bin``.
    """

    feature: np.ndarray
    threshold_bin: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    default_left: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def n_leaves(self) -> int:
        return int(np.count_nonzero(self.feature < 0))

    def is_leaf(self, node: int) -> bool:
        return self.feature[node] < 0

    def scaled(self, factor: float) -> "Tree":
        return Tree(
            self.feature, self.threshold_bin, self.left, self.right,
            self.value * factor, self.default_left,
        )

    def __eq__(self, other):
        if not isinstance(other, Tree):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("feature", "threshold_bin", "left", "right", "value", "default_left")
        )

    @classmethod
    def from_nodes(cls, nodes: list[dict]) -> "Tree":
        """Build from nodes given in pre-order (children ids already set)."""
        n = len(nodes)
        t = cls(
            feature=np.full(n, -1, dtype=np.int32),
            threshold_bin=np.zeros(n, dtype=np.int32),
            left=np.full(n, -1, dtype=np.int32),
            right=np.full(n, -1, dtype=np.int32),
            value=np.zeros(n, dtype=np.float64),
            default_left=np.zeros(n, dtype=np.uint8),
        )
        for i, nd in enumerate(nodes):
            if nd.get("feature", -1) >= 0:
                t.feature[i] = nd["feature"]
                t.threshold_bin[i] = nd["bin"]
                t.left[i] = nd["left"]
                t.right[i] = nd["right"]
                t.default_left[i] = nd.get("default_left", 1)
            else:
                t.value[i] = nd["value"]
        return t


@numba.njit(cache=True, nogil=True)
def _route(codes, feature, threshold_bin, left, right, value, out):
    for i in range(codes.shape[0]):
        node = 0
        while feature[node] >= 0:
            if codes[i, feature[node]] <= threshold_bin[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] += value[node]


def predict_tree_binned(tree: Tree, codes: np.ndarray, out: Optional[np.ndarray] = None) -> np.ndarray:
    """Add each row's leaf value to ``out`` (allocated as zeros if omitted)."""
    if out is None:
        out = np.zeros(codes.shape[0], dtype=np.float64)
    _route(codes, tree.feature, tree.threshold_bin, tree.left, tree.right, tree.value, out)
    return out


class _Leaf:
    __slots__ = ("node", "rows", "hist", "sum_g", "sum_h", "count", "split")

    def __init__(self, node, rows, hist, sum_g, sum_h, count):
        self.node = node
        self.rows = rows
        self.hist = hist
        self.sum_g = sum_g
        self.sum_h = sum_h
        self.count = count
        self.split = None


def grow_tree(
    codes: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    config,
    rng: Optional[np.random.Generator] = None,
    rows: Optional[np.ndarray] = None,
    features: Optional[np.ndarray] = None,
) -> Tree:
    """Grow one tree by repeatedly splitting the leaf with the largest gain.

    Stops at ``config.num_leaves`` leaves or when no leaf has a positive-gain
    split. Leaf values are the unscaled Newton step ``-G / (H + lambda_l2)``.

    ``rows`` restricts training to a subset of samples (bagging). When
    ``features`` is None and ``config.feature_fraction < 1``, a feature subset
    is drawn from ``rng``. Ties between leaves go to the leaf created first.
    """
    n, n_features = codes.shape
    g = np.ascontiguousarray(g, dtype=np.float64)
    h = np.ascontiguousarray(h, dtype=np.float64)
    if g.shape != (n,) or h.shape != (n,):
        raise ValueError(f"g and h must both have shape ({n},)")
    codes = np.asfortranarray(codes)
    rows = np.arange(n, dtype=np.int64) if rows is None else np.asarray(rows, dtype=np.int64)
    if features is None:
        features = _sample_features(n_features, config.feature_fraction, rng)
    features = np.asarray(np.sort(features), dtype=np.int64)
    mask = np.zeros(n_features, dtype=bool)
    mask[features] = True
    n_bins = int(codes.max()) + 1 if n else 1
    lam = float(config.lambda_l2)

    # nodes in creation order; renumbered to pre-order at the end
    nodes: list[dict] = [{}]
    root = _Leaf(0, rows, build_histogram(codes, rows, g, h, features, n_bins),
                 float(g[rows].sum()), float(h[rows].sum()), rows.shape[0])
    heap: list = []

    def consider(leaf: _Leaf):
        leaf.split = best_split(leaf.hist, leaf.sum_g, leaf.sum_h, leaf.count,
                                lam, config.min_data_in_leaf, mask)
        if leaf.split is not None:
            heapq.heappush(heap, (-leaf.split.gain, leaf.node, leaf))
        else:
            leaf.hist = None

    leaves = {0: root}
    consider(root)
    n_leaves = 1
    while heap and n_leaves < config.num_leaves:
        _, node_id, leaf = heapq.heappop(heap)
        s = leaf.split
        goes_left = codes[leaf.rows, s.feature] <= s.bin
        rows_l, rows_r = leaf.rows[goes_left], leaf.rows[~goes_left]
        if rows_l.shape[0] <= rows_r.shape[0]:
            hist_l = build_histogram(codes, rows_l, g, h, features, n_bins)
            hist_r = subtract_histogram(leaf.hist, hist_l)
        else:
            hist_r = build_histogram(codes, rows_r, g, h, features, n_bins)
            hist_l = subtract_histogram(leaf.hist, hist_r)
        id_l, id_r = len(nodes), len(nodes) + 1
        nodes[node_id] = {"feature": s.feature, "bin": s.bin, "left": id_l, "right": id_r}
        nodes.extend([{}, {}])
        del leaves[node_id]
        leaf.hist = None
        child_l = _Leaf(id_l, rows_l, hist_l, s.sum_g_left, s.sum_h_left, s.count_left)
        child_r = _Leaf(id_r, rows_r, hist_r, s.sum_g_right, s.sum_h_right, s.count_right)
        leaves[id_l], leaves[id_r] = child_l, child_r
        n_leaves += 1
        consider(child_l)
        consider(child_r)

    for node_id, leaf in leaves.items():
        nodes[node_id] = {"value": leaf_value(leaf.sum_g, leaf.sum_h, lam)}
    return Tree.from_nodes(_preorder(nodes))


def _sample_features(n_features: int, fraction: float, rng) -> np.ndarray:
    if fraction >= 1.0:
        return np.arange(n_features)
    if rng is None:
        raise ValueError("feature_fraction < 1 needs an rng")
    k = max(1, int(round(fraction * n_features)))
    return np.sort(rng.choice(n_features, size=k, replace=False))


def _preorder(nodes: list[dict]) -> list[dict]:
    order: list[int] = []
    stack = [0]
    while stack:
        i = stack.pop()
        order.append(i)
        if "feature" in nodes[i]:
            stack.append(nodes[i]["right"])
            stack.append(nodes[i]["left"])
    new_id = {old: new for new, old in enumerate(order)}
    out = []
    for old in order:
        nd = dict(nodes[old])
        if "feature" in nd:
            nd["left"] = new_id[nd["left"]]
            nd["right"] = new_id[nd["right"]]
        out.append(nd)
    return out
