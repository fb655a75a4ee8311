"""Two-layer classification head: ``d_in -> d_h (ReLU) -> 1 (sigmoid)``.

Trained with mean binary cross-entropy and Adam. Everything runs in
float64; the model file stores float32.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import metrics
from ._math import sigmoid

__all__ = [
    "MLPParams",
    "AdamState",
    "MLPConfig",
    "TrainHistory",
    "init_params",
    "forward",
    "predict_proba",
    "bce_loss",
    "backward",
    "adam_step",
    "train_head",
    "save_head",
    "load_head",
    "PROB_EPS",
]

PROB_EPS = 1e-7
MAGIC = b"MLPH"
VERSION = 1
_HEADER = struct.Struct("<4sHIIB")


@dataclass
class MLPParams:
    """Head weights. ``W1`` is ``(d_in, d_h)``, ``W2`` is ``(d_h,)``."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: float

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64).reshape(-1)
        self.W2 = np.asarray(self.W2, dtype=np.float64).reshape(-1)
        self.b2 = float(self.b2)
        if self.W1.ndim != 2:
            raise ValueError("W1 must be 2-D")
        d_h = self.W1.shape[1]
        if self.b1.shape != (d_h,) or self.W2.shape != (d_h,):
            raise ValueError(
                f"inconsistent shapes: W1 {self.W1.shape}, b1 {self.b1.shape}, W2 {self.W2.shape}"
            )

    @property
    def d_in(self) -> int:
        return self.W1.shape[0]

    @property
    def d_h(self) -> int:
        return self.W1.shape[1]

    def copy(self) -> "MLPParams":
        return MLPParams(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2)

    def arrays(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, np.array([self.b2])]

    @classmethod
    def zeros(cls, d_in: int, d_h: int) -> "MLPParams":
        return cls(np.zeros((d_in, d_h)), np.zeros(d_h), np.zeros(d_h), 0.0)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: Optional[MLPParams] = None
    v: Optional[MLPParams] = None

    def __post_init__(self):
        if not self.lr > 0 or not self.eps > 0:
            raise ValueError("Adam lr and eps must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("Adam betas must lie in [0, 1)")


@dataclass(frozen=True)
class MLPConfig:
    hidden: int = 256
    epochs: int = 20
    batch_size: int = 32
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    threshold: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("hidden and batch_size must be >= 1, epochs >= 0")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)
    val_f1: list[float] = field(default_factory=list)
    best_epoch: Optional[int] = None

    def as_dict(self) -> dict:
        return {"train_loss": self.train_loss, "val_f1": self.val_f1, "best_epoch": self.best_epoch}


def init_params(d_in: int, d_h: int, rng: np.random.Generator) -> MLPParams:
    """He-uniform weights, zero biases."""
    lim1 = np.sqrt(6.0 / d_in)
    lim2 = np.sqrt(6.0 / d_h)
    W1 = rng.uniform(-lim1, lim1, size=(d_in, d_h))
    W2 = rng.uniform(-lim2, lim2, size=d_h)
    return MLPParams(W1, np.zeros(d_h), W2, 0.0)


def _check_input(p: MLPParams, X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != p.d_in:
        raise ValueError(f"input has {X.shape[-1]} features, head expects {p.d_in}")
    return X


def _logits(p: MLPParams, X: np.ndarray):
    pre = X @ p.W1 + p.b1
    hidden = np.maximum(pre, 0.0)
    return hidden @ p.W2 + p.b2, pre, hidden


def forward(p: MLPParams, x) -> float:
    """Probability for one input vector, strictly inside (0, 1)."""
    x = _check_input(p, x)
    if x.ndim != 1:
        raise ValueError("forward expects a single vector; use predict_proba for batches")
    z, _, _ = _logits(p, x[None, :])
    return float(sigmoid(z)[0])


def predict_proba(p: MLPParams, X) -> np.ndarray:
    X = _check_input(p, X)
    z, _, _ = _logits(p, np.atleast_2d(X))
    return sigmoid(z)


def bce_loss(prob, y):
    """Binary cross-entropy with the probability clamped to ``[1e-7, 1-1e-7]``."""
    q = np.clip(np.asarray(prob, dtype=np.float64), PROB_EPS, 1.0 - PROB_EPS)
    y = np.asarray(y, dtype=np.float64)
    loss = -(y * np.log(q) + (1.0 - y) * np.log1p(-q))
    return float(loss) if loss.ndim == 0 else loss


def mean_loss(p: MLPParams, X, y) -> float:
    return float(np.mean(bce_loss(predict_proba(p, X), y)))


def backward(p: MLPParams, X, y) -> MLPParams:
    """Gradient of the mean (unclamped) BCE over the batch.

    ``y`` may hold soft targets in [0, 1]. Uses dL/dlogit = sigmoid(z) - y.
    """
    X = _check_input(p, np.atleast_2d(X))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    n = X.shape[0]
    if n == 0:
        raise ValueError("backward needs a non-empty batch")
    if y.shape[0] != n:
        raise ValueError(f"{n} inputs but {y.shape[0]} targets")
    z, pre, hidden = _logits(p, X)
    dz = (sigmoid(z) - y) / n
    gW2 = hidden.T @ dz
    gb2 = float(dz.sum())
    dhidden = np.outer(dz, p.W2)
    dhidden[pre <= 0] = 0.0
    gW1 = X.T @ dhidden
    gb1 = dhidden.sum(axis=0)
    return MLPParams(gW1, gb1, gW2, gb2)


def adam_step(p: MLPParams, g: MLPParams, s: AdamState) -> tuple[MLPParams, AdamState]:
    """One bias-corrected Adam update. Returns new objects; inputs are untouched."""
    m = s.m if s.m is not None else MLPParams.zeros(p.d_in, p.d_h)
    v = s.v if s.v is not None else MLPParams.zeros(p.d_in, p.d_h)
    t = s.t + 1
    c1 = 1.0 - s.beta1**t
    c2 = 1.0 - s.beta2**t
    new_p, new_m, new_v = [], [], []
    for w, gw, mw, vw in zip(p.arrays(), g.arrays(), m.arrays(), v.arrays()):
        mw = s.beta1 * mw + (1.0 - s.beta1) * gw
        vw = s.beta2 * vw + (1.0 - s.beta2) * gw * gw
        step = s.lr * (mw / c1) / (np.sqrt(vw / c2) + s.eps)
        new_p.append(w - step)
        new_m.append(mw)
        new_v.append(vw)

    def pack(a):
        return MLPParams(a[0], a[1], a[2], a[3][0])

    return pack(new_p), replace(s, t=t, m=pack(new_m), v=pack(new_v))


def _labels(y, n: int, what: str) -> np.ndarray:
    y = np.asarray(y)
    if y.shape != (n,):
        raise ValueError(f"{what}: expected {n} labels, got shape {y.shape}")
    if n and not np.isin(y, (0, 1)).all():
        raise ValueError(f"{what}: labels must be 0/1")
    return y.astype(np.float64)


def train_head(
    X_train,
    y_train,
    X_val=None,
    y_val=None,
    config: MLPConfig = MLPConfig(),
    d_in: Optional[int] = None,
) -> tuple[MLPParams, TrainHistory]:
    """Mini-batch Adam training; keeps the epoch with the best validation F1.

    Without a validation set the last epoch is kept. Initialisation and
    per-epoch shuffles both come from ``config.seed``. Raises
    FloatingPointError if the parameters stop being finite (divergence).
    """
    X = np.asarray(X_train, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training matrix must be 2-D and non-empty")
    if d_in is not None and X.shape[1] != d_in:
        raise ValueError(f"training matrix has dim {X.shape[1]}, head declared d_in={d_in}")
    y = _labels(y_train, X.shape[0], "train")
    has_val = X_val is not None
    if has_val:
        Xv = np.asarray(X_val, dtype=np.float64)
        if Xv.ndim != 2 or Xv.shape[1] != X.shape[1]:
            raise ValueError(f"validation matrix must have dim {X.shape[1]}")
        yv = _labels(y_val, Xv.shape[0], "validation").astype(np.int64)

    rng = np.random.default_rng(config.seed)
    params = init_params(X.shape[1], config.hidden, rng)
    state = AdamState(lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    history = TrainHistory()
    best, best_f1 = params.copy(), -1.0
    n = X.shape[0]
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                total += float(bce_loss(predict_proba(params, X[idx]), y[idx]).sum())
                params, state = adam_step(params, backward(params, X[idx], y[idx]), state)
        if not all(np.isfinite(a).all() for a in params.arrays()):
            raise FloatingPointError(f"head parameters became non-finite in epoch {epoch}")
        history.train_loss.append(total / n)
        if has_val:
            pred = (predict_proba(params, Xv) >= config.threshold).astype(np.int64)
            score = metrics.f1(metrics.confusion(yv, pred))
            history.val_f1.append(score)
            if score > best_f1:
                best, best_f1 = params.copy(), score
                history.best_epoch = epoch
    if config.epochs == 0:
        return params, history
    if not has_val:
        history.best_epoch = config.epochs - 1
        return params, history
    return best, history


def save_head(p: MLPParams, path: "str | Path", scaler: Optional[tuple[np.ndarray, np.ndarray]] = None) -> None:
    """Write ``MLPH`` v1: header, optional (mean, scale) input standardiser, float32 params."""
    le = np.dtype("<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, p.d_in, p.d_h, 1 if scaler is not None else 0))
        if scaler is not None:
            mean, scale = scaler
            fh.write(np.asarray(mean, dtype=le).reshape(p.d_in).tobytes())
            fh.write(np.asarray(scale, dtype=le).reshape(p.d_in).tobytes())
        for a in p.arrays():
            fh.write(np.asarray(a, dtype=le).tobytes(order="C"))


def load_head(path: "str | Path") -> tuple[MLPParams, Optional[tuple[np.ndarray, np.ndarray]]]:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC:
        raise ValueError(f"{path}: not an MLPH model file")
    if len(data) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    _, version, d_in, d_h, has_scaler = _HEADER.unpack_from(data)
    if version != VERSION:
        raise ValueError(f"{path}: unsupported MLPH version {version}")
    n_scaler = 2 * d_in if has_scaler else 0
    count = n_scaler + d_in * d_h + 2 * d_h + 1
    if len(data) != _HEADER.size + 4 * count:
        raise ValueError(f"{path}: expected {count} float32 values after the header")
    flat = np.frombuffer(data, dtype="<f4", offset=_HEADER.size).astype(np.float64)
    scaler = None
    if has_scaler:
        scaler = (flat[:d_in].copy(), flat[d_in:2 * d_in].copy())
    flat = flat[n_scaler:]
    W1 = flat[: d_in * d_h].reshape(d_in, d_h)
    rest = flat[d_in * d_h:]
    return MLPParams(W1, rest[:d_h], rest[d_h:2 * d_h], rest[2 * d_h]), scaler
