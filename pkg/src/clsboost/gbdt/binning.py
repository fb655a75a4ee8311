"""Quantile binning of continuous features.

Thresholds are *upper edges taken from the training sample itself*: a value
``x`` falls in bin ``i`` when ``thresholds[i-1] < x <= thresholds[i]``.
Because edges are actual sample values chosen from ranks and counts only,
any strictly increasing transform of a feature (applied to train and test
alike) produces exactly the same bin codes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

__all__ = ["BinMapper", "fit_bins"]


@numba.njit(cache=True)
def _greedy_edges(counts, max_bins):
    """Indices of distinct values that close a bin, aiming for equal counts."""
    out = np.empty(max_bins - 1, dtype=np.int64)
    n_out = 0
    remaining = counts.sum()
    bins_left = max_bins
    acc = 0
    for i in range(counts.shape[0] - 1):
        acc += counts[i]
        if acc * bins_left >= remaining:
            out[n_out] = i
            n_out += 1
            remaining -= acc
            acc = 0
            bins_left -= 1
            if bins_left == 1:
                break
    return out[:n_out]


def _feature_edges(col: np.ndarray, max_bins: int) -> np.ndarray:
    distinct, counts = np.unique(col, return_counts=True)
    if distinct.size <= max_bins:
        return distinct[:-1].astype(np.float32)
    return distinct[_greedy_edges(counts.astype(np.int64), max_bins)].astype(np.float32)


@dataclass(frozen=True, eq=False)
class BinMapper:
    """Per-feature sorted upper-edge thresholds (at most ``max_bins - 1`` each)."""

    thresholds: tuple[np.ndarray, ...]
    max_bins: int

    @property
    def n_features(self) -> int:
        return len(self.thresholds)

    @property
    def n_bins(self) -> np.ndarray:
        return np.array([t.size + 1 for t in self.thresholds], dtype=np.int64)

    @property
    def code_dtype(self):
        return np.uint8 if self.max_bins <= 256 else np.uint16

    def transform(self, X) -> np.ndarray:
        """Bin codes, shape ``(n, n_features)``, Fortran order (feature columns contiguous)."""
        X = np.asarray(X, dtype=np.float32)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got shape {X.shape}")
        out = np.empty(X.shape, dtype=self.code_dtype, order="F")
        for f, thr in enumerate(self.thresholds):
            out[:, f] = np.searchsorted(thr, X[:, f], side="left")
        return out

    def threshold_value(self, feature: int, bin_index: int) -> float:
        return float(self.thresholds[feature][bin_index])

    def __eq__(self, other):
        if not isinstance(other, BinMapper):
            return NotImplemented
        return (
            self.max_bins == other.max_bins
            and self.n_features == other.n_features
            and all(np.array_equal(a, b) for a, b in zip(self.thresholds, other.thresholds))
        )


def fit_bins(X, max_bins: int = 255) -> BinMapper:
    """Fit quantile edges on each column of ``X``.

    Columns with at most ``max_bins`` distinct values get one bin per value;
    otherwise distinct values are walked in order and a bin is closed once it
    holds its share of the remaining samples.
    """
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("fit_bins needs a non-empty 2-D matrix")
    if max_bins < 2 or max_bins > 65536:
        raise ValueError("max_bins must lie in [2, 65536]")
    if not np.isfinite(X).all():
        raise ValueError("features must be finite")
    return BinMapper(tuple(_feature_edges(X[:, f], max_bins) for f in range(X.shape[1])), max_bins)
