"""Second-order split search over histograms."""
from __future__ import annotations

from typing import NamedTuple, Optional

import numba
import numpy as np

__all__ = ["SplitInfo", "best_split", "leaf_value", "GAIN_RTOL"]

# A split must beat rounding noise: gain > GAIN_RTOL * (left_score + right_score).
# Splitting a node whose samples all share one gradient gives a gain that is
# zero up to a few ulps; this keeps such nodes unsplit.
GAIN_RTOL = 1e-12


class SplitInfo(NamedTuple):
    feature: int
    bin: int
    gain: float
    sum_g_left: float
    sum_h_left: float
    count_left: int
    sum_g_right: float
    sum_h_right: float
    count_right: int


def leaf_value(G: float, H: float, lam: float) -> float:
    den = H + lam
    return -G / den if den > 0 else 0.0


def best_split(
    hist,
    sum_g: float,
    sum_h: float,
    count: int,
    lambda_l2: float,
    min_data_in_leaf: int,
    feature_mask: Optional[np.ndarray] = None,
) -> Optional[SplitInfo]:
    """Best (feature, bin) cut of a node, or None when nothing gains.

    gain = GL²/(HL+λ) + GR²/(HR+λ) - G²/(H+λ)

    ``hist`` is ``(hist_g, hist_h, hist_c)`` each shaped ``(n_features,
    n_bins)``. Cutting at bin ``b`` sends bins ``<= b`` left. Candidates
    need ``min_data_in_leaf`` samples on each side and positive gain
    (see ``GAIN_RTOL``). Exact ties go to the lowest feature, then the
    lowest bin.
    """
    hist_g, hist_h, hist_c = hist
    n_features = hist_g.shape[0]
    if feature_mask is None:
        mask = np.ones(n_features, dtype=np.bool_)
    else:
        mask = np.asarray(feature_mask, dtype=np.bool_)
    if sum_h + lambda_l2 <= 0:
        return None
    res = _scan(hist_g, hist_h, hist_c, float(sum_g), float(sum_h), int(count),
                float(lambda_l2), max(1, int(min_data_in_leaf)), mask, GAIN_RTOL)
    f, b, gain, GL, HL, CL = res
    if f < 0:
        return None
    return SplitInfo(
        feature=int(f),
        bin=int(b),
        gain=float(gain),
        sum_g_left=float(GL),
        sum_h_left=float(HL),
        count_left=int(CL),
        sum_g_right=float(sum_g - GL),
        sum_h_right=float(sum_h - HL),
        count_right=int(count - CL),
    )


@numba.njit(cache=True, nogil=True)
def _scan(hist_g, hist_h, hist_c, G, H, C, lam, min_leaf, mask, rtol):
    parent = G * G / (H + lam)
    best_f, best_b = -1, -1
    best_gain = 0.0
    best_gl, best_hl, best_cl = 0.0, 0.0, 0
    for f in range(hist_g.shape[0]):
        if not mask[f]:
            continue
        gl = 0.0
        hl = 0.0
        cl = 0
        for b in range(hist_g.shape[1] - 1):
            gl += hist_g[f, b]
            hl += hist_h[f, b]
            cl += hist_c[f, b]
            if cl < min_leaf:
                continue
            if C - cl < min_leaf:
                break
            gr = G - gl
            hr = H - hl
            if hl + lam <= 0 or hr + lam <= 0:
                continue
            left = gl * gl / (hl + lam)
            right = gr * gr / (hr + lam)
            gain = left + right - parent
            if gain > rtol * (left + right) and (best_f < 0 or gain > best_gain):
                best_f, best_b, best_gain = f, b, gain
                best_gl, best_hl, best_cl = gl, hl, cl
    return best_f, best_b, best_gain, best_gl, best_hl, best_cl
