"""Binary classification metrics (positive class = label 1).

Degenerate ratios (0/0) are defined as 0, as shared-task scorers do.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Sequence

import numpy as np

__all__ = [
    "Confusion",
    "confusion",
    "precision",
    "recall",
    "f1",
    "f1_from_pr",
    "round_half_up",
    "format_report",
    "evaluate",
]


@dataclass(frozen=True)
class Confusion:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


def _as_labels(y: Sequence[int], name: str) -> np.ndarray:
    arr = np.asarray(y)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be 1-D")
    if arr.size and not np.isin(arr, (0, 1)).all():
        raise ValueError(f"{name} must contain only 0/1 labels")
    return arr.astype(np.int8)


def confusion(y_true: Sequence[int], y_pred: Sequence[int]) -> Confusion:
    t = _as_labels(y_true, "y_true")
    p = _as_labels(y_pred, "y_pred")
    if t.shape != p.shape:
        raise ValueError(f"length mismatch: {t.size} true labels vs {p.size} predictions")
    tp = int(np.count_nonzero((t == 1) & (p == 1)))
    fp = int(np.count_nonzero((t == 0) & (p == 1)))
    fn = int(np.count_nonzero((t == 1) & (p == 0)))
    return Confusion(tp=tp, fp=fp, fn=fn, tn=int(t.size) - tp - fp - fn)


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def precision(c: Confusion) -> float:
    return _ratio(c.tp, c.tp + c.fp)


def recall(c: Confusion) -> float:
    return _ratio(c.tp, c.tp + c.fn)


def f1_from_pr(p: float, r: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    s = p + r
    return 2.0 * p * r / s if s > 0 else 0.0


def f1(c: Confusion) -> float:
    # 2tp / (2tp + fp + fn) avoids the rounding of the P, R intermediates
    return _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)


def round_half_up(x: float, places: int = 3) -> float:
    """Round the way results tables are printed (0.0005 -> 0.001)."""
    q = Decimal(1).scaleb(-places)
    return float(Decimal(repr(float(x))).quantize(q, rounding=ROUND_HALF_UP))


def evaluate(y_true: Sequence[int], y_pred: Sequence[int]) -> dict:
    c = confusion(y_true, y_pred)
    return {
        "precision": precision(c),
        "recall": recall(c),
        "f1": f1(c),
        "tp": c.tp,
        "fp": c.fp,
        "fn": c.fn,
        "tn": c.tn,
    }


def format_report(c: Confusion) -> str:
    """``precision=… recall=… f1=… tp=… fp=… fn=… tn=…`` with 3 decimals."""
    return (
        f"precision={round_half_up(precision(c)):.3f} "
        f"recall={round_half_up(recall(c)):.3f} "
        f"f1={round_half_up(f1(c)):.3f} "
        f"tp={c.tp} fp={c.fp} fn={c.fn} tn={c.tn}"
    )
