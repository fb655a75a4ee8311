"""Gradient/hessian histograms over binned features.

A node histogram is three arrays of shape ``(n_features, n_bins)``: summed
gradients, summed hessians (float64) and sample counts (int64). Bins are accumulated
feature by feature in row order, so sums are reproducible bit for bit.
"""
import numba
import numpy as np

__all__ = ["build_histogram", "subtract_histogram"]


@numba.njit(cache=True, nogil=True)
def _build(codes, rows, g, h, features, n_bins, hist_g, hist_h, hist_c):
    for k in range(features.shape[0]):
        f = features[k]
        col = codes[:, f]
        for i in range(rows.shape[0]):
            r = rows[i]
            b = col[r]
            hist_g[f, b] += g[r]
            hist_h[f, b] += h[r]
            hist_c[f, b] += 1


def build_histogram(codes, rows, g, h, features, n_bins):
    """Histogram of the samples ``rows`` for the listed ``features``.

    Features not listed keep all-zero rows.
    """
    n_features = codes.shape[1]
    hist_g = np.zeros((n_features, n_bins), dtype=np.float64)
    hist_h = np.zeros((n_features, n_bins), dtype=np.float64)
    hist_c = np.zeros((n_features, n_bins), dtype=np.int64)
    _build(codes, rows, g, h, features, n_bins, hist_g, hist_h, hist_c)
    return hist_g, hist_h, hist_c


def subtract_histogram(parent, child):
    """Sibling histogram as ``parent - child``."""
    return tuple(p - c for p, c in zip(parent, child))
